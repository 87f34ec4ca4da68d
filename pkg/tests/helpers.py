"""Small synthetic corpora and models shared by the tests."""
from mcqa_transfer.qacnn import QACNN
from mcqa_transfer.synth import SynthConfig, gen_synthetic

TINY_SYNTH = dict(n_entities=12, n_attributes=14, n_fillers=6, n_qwords=2, sentences=5, sentence_len=4,
                  qtype_mix=(0.4, 0.4, 0.2), synonym_noise=1.0,
                  source_sizes=(60, 20, 20), target_sizes=(12, 10, 30), embed_dim=8)


def tiny_corpus(seed=0, **over):
    return gen_synthetic(SynthConfig(seed=seed, **{**TINY_SYNTH, **over}))


def randomize(params, rng, scale=0.5):
    """Overwrite every tensor with N(0, scale) draws, keeping PAD rows at zero."""
    for n in params.names():
        t = params[n]
        t.data = rng.normal(scale=scale, size=t.shape)
        if n.endswith("embed") or n.split(".")[-1] in "ABCF":
            t.data[0] = 0.0
    return params


def tiny_qacnn_model():
    return QACNN(d=8, filters1=4, filters2=4, hidden=6, max_choice_len=2)

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = []


def acceptance(label, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, f"{label}: {detail}"
