"""Train a small detector on synthetic headlines, then probe it.

    python demos/quickstart.py [--out demo_out]

Walks through the library API in the order a study would: build a corpus,
split it, train, evaluate, perturb the test headlines, rank features by
permutation importance, explain one prediction locally, and export the
per-class radar table.
"""

import argparse
from pathlib import Path

from baitcheck import (
    ClickGuardModel, ModelConfig, PerturbationSpec, TrainConfig, TrustReport, avg_prediction_change,
    evaluate, export_radar, lime_explain, pfi_table, stratified_split, train,
)
from baitcheck.synthetic import separable_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()
    out = Path(args.out)

    corpus = separable_corpus(200, seed=0)
    split = stratified_split(corpus, 0.8, seed=0)
    print(f"{len(split.train)} train / {len(split.test)} test headlines")

    # a narrower model than the default keeps this under a minute
    model = ClickGuardModel.init(ModelConfig(d_model=32, max_len=16, fusion_dim=32), seed=0)
    _, history = train(model, split, TrainConfig(epochs=8, optimizer="adam", eta_max=3e-3, eta_min=1e-4))
    for e in range(history.epochs):
        print(f"epoch {e + 1}: train acc {history.train_acc[e]:.3f}  val acc {history.val_acc[e]:.3f}")
    m = evaluate(model, split.test)
    print(f"test accuracy {m.accuracy:.3f}  f1 {m.f1}")
    print("selected features:", ", ".join(model.rfe.kept))

    report = TrustReport(seed=0)
    for i, kind in enumerate(("shuffle_words", "stopword_removal", "random_deletion", "typos", "synonyms")):
        report.perturbation[kind] = avg_prediction_change(model, split.test, PerturbationSpec(kind, seed=i))
        print(f"avg prediction change under {kind}: {report.perturbation[kind]:.4f}")

    report.pfi = pfi_table(model, split.test, repeats=5)
    for r in sorted(report.pfi, key=lambda r: -r.importance)[:3]:
        print(f"PFI {r.feature}: {r.importance:+.4f} +/- {r.std:.4f}")

    headline = split.test[0]
    exp = lime_explain(model, headline, n_samples=500, record_id=headline.index)
    report.lime.append(exp)
    print(f"explaining {headline.text!r} (p = {exp.prediction:.3f})")
    for row in exp.rows():
        print(f"  {row['rank']}. {row['label']:<24} {row['weight']:+.4f}")

    report.radar = export_radar(corpus)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "checkpoint.json")
    for p in report.write(out):
        print("wrote", p)


if __name__ == "__main__":
    main()
