"""
MemN2N and QACNN on one synthetic story
=======================================

Generate a small synthetic corpus, score one target question with both
models and write QACNN's attention over the story as an SVG heatmap.
"""

from pathlib import Path

import numpy as np

from mcqa_transfer.memn2n import MemN2N
from mcqa_transfer.qacnn import QACNN
from mcqa_transfer.report import attention_heatmap_svg
from mcqa_transfer.synth import SynthConfig, encode_corpus, gen_synthetic

out = Path("demo_output")
out.mkdir(exist_ok=True)

cfg = SynthConfig(source_sizes=(20, 5, 5), target_sizes=(5, 5, 5), seed=1)
corpus = gen_synthetic(cfg)
vocab, data = encode_corpus(corpus, seed=1)

ex = corpus.target.test.examples[0]
for sent in ex.story:
    print(" ".join(sent))
print("Q:", " ".join(ex.question))
for k, c in enumerate(ex.choices):
    print(f"  {k}{'*' if k == ex.answer else ' '} {' '.join(c)}")

# %%
# Untrained models give a distribution over the choices; QACNN's small
# initial weights keep it close to uniform.
enc = data.target.test.examples[0]
memn2n = MemN2N(d=cfg.embed_dim)
qacnn = QACNN(d=cfg.embed_dim, max_choice_len=cfg.choice_len)
p_mem = memn2n.init_params(len(vocab), seed=0, embeddings=data.embeddings)
p_cnn = qacnn.init_params(len(vocab), seed=0, embeddings=data.embeddings)
print("memn2n probs:", np.round(memn2n.forward(p_mem, enc).choice_probs, 3))
print("qacnn probs: ", np.round(qacnn.forward(p_cnn, enc).choice_probs, 3))

# %%
# Word attention comes from cosine similarity with the question, so even the
# untrained QACNN looks at the asked entity's sentence.
exp = qacnn.export_attention(p_cnn, ex, ex.answer, vocab=vocab)
print("sentence attention:", np.round(exp.sentence_level, 3))
(out / "attention.svg").write_text(attention_heatmap_svg(exp, title=" ".join(ex.question)), encoding="utf-8")
print("wrote", out / "attention.svg")
