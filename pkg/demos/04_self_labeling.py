"""
Self-labeling on the unlabeled target
=====================================

Start from the pre-trained model, hide the target answers, and let the
model label its own training data each epoch. The trace is test accuracy
per epoch; epoch 0 is the zero-shot model. The dashed line is supervised
fine-tuning of the same parameters on the same 50 examples with their real
answers.
"""

from pathlib import Path

from mcqa_transfer.qacnn import QACNN
from mcqa_transfer.report import accuracy_curve_svg
from mcqa_transfer.selflabel import SelfLabelConfig, self_label_finetune
from mcqa_transfer.synth import BENCHMARK, SynthConfig, encode_corpus, gen_synthetic
from mcqa_transfer.transfer import FreezeSpec, TrainConfig, pretrain, transfer_run

seed = 0
cfg = SynthConfig(seed=seed)
_, data = encode_corpus(gen_synthetic(cfg), seed=seed)
model = QACNN(d=cfg.embed_dim, max_choice_len=cfg.choice_len)
pre_cfg = TrainConfig(seed=seed, **BENCHMARK["train"])
pre = pretrain(data, pre_cfg, model)

supervised = transfer_run(data, pre_cfg, FreezeSpec("ft-all", tune_embeddings=True), model,
                          finetune_cfg=TrainConfig(seed=seed, **BENCHMARK["finetune"]),
                          pretrained=pre).record.test_accuracy

# %%
train = data.target.train
unlabeled = train.with_examples(ex.with_answer(None) for ex in train.examples)
sl_cfg = SelfLabelConfig(epochs=BENCHMARK["selflabel"]["epochs"],
                         train=TrainConfig(seed=seed, **BENCHMARK["selflabel_train"]))
_, trace = self_label_finetune(pre[0], unlabeled, data.target.test, sl_cfg, model)

for epoch, (acc, churn) in enumerate(zip(trace.accuracy, trace.churn)):
    print(f"epoch {epoch:2d}  accuracy {acc:.3f}  churn {churn:.2f}")
print(f"supervised ft-all: {supervised:.3f}")

# %%
out = Path("demo_output")
out.mkdir(exist_ok=True)
(out / "selflabel.svg").write_text(accuracy_curve_svg(trace.accuracy, reference=supervised, title="self-labeling"),
                                   encoding="utf-8")
print("wrote", out / "selflabel.svg")
