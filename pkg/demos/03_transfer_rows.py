"""
Transfer rows on the synthetic benchmark
========================================

Pre-train QACNN on the source side, then compare training from scratch on
the 50 target examples against zero-shot use and the fine-tuning presets.
One seed here; the acceptance suite averages five.
"""

from mcqa_transfer.qacnn import QACNN
from mcqa_transfer.synth import BENCHMARK, SynthConfig, encode_corpus, gen_synthetic
from mcqa_transfer.transfer import FreezeSpec, TrainConfig, pretrain, transfer_run

seed = 0
cfg = SynthConfig(seed=seed)
vocab, data = encode_corpus(gen_synthetic(cfg), seed=seed)
model = QACNN(d=cfg.embed_dim, max_choice_len=cfg.choice_len)
pre_cfg = TrainConfig(seed=seed, **BENCHMARK["train"])
ft_cfg = TrainConfig(seed=seed, **BENCHMARK["finetune"])

print(f"source train {len(data.source.train)}, target train {len(data.target.train)}, "
      f"target test {len(data.target.test)}, vocab {len(vocab)}")

# %%
# Pre-training runs once and is shared by every row that starts from it.
pre = pretrain(data, pre_cfg, model)
print(f"source dev accuracy after pre-training: {pre[1].dev_accuracy:.3f}")

# %%
rows = ["target-only", "source-only", "ft-last", "ft-last2", "ft-all"]
for preset in rows:
    rec = transfer_run(data, pre_cfg, FreezeSpec(preset), model, finetune_cfg=ft_cfg, pretrained=pre).record
    by_type = " ".join(f"type {t}: {v['accuracy']:.2f}" for t, v in sorted(rec.qtype_accuracy.items())
                       if v["accuracy"] is not None)
    print(f"{preset:12s} test {rec.test_accuracy:.3f}   {by_type}")
