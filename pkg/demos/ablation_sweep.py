"""Compare ablation variants on one shared split.

    python demos/ablation_sweep.py                      # synthetic headlines
    python demos/ablation_sweep.py --dataset clickbait.csv --label-column clickbait --max-records 8000

Prints test accuracy and wall time per variant. With the balanced 32k news-headline
corpus this is the run behind acceptance criteria 3 and 4.
"""

import argparse
import time

from baitcheck import ClickGuardModel, ModelConfig, TrainConfig, evaluate, load_dataset, stratified_split, train
from baitcheck.ssafb import ABLATION_ROWS, with_ablation
from baitcheck.synthetic import separable_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset")
    ap.add_argument("--label-column", default="label")
    ap.add_argument("--max-records", type=int, default=8000)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--variants", default="structural-only,full,ssafb-no-alpha")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.dataset:
        records = list(load_dataset(args.dataset, label_column=args.label_column))
    else:
        records = list(separable_corpus(400, seed=args.seed))
    if len(records) > args.max_records:
        records = stratified_split(records, args.max_records / len(records), args.seed).train
    split = stratified_split(records, 0.8, args.seed)
    print(f"{len(split.train)} train / {len(split.test)} test")

    cfg = TrainConfig(epochs=args.epochs, optimizer="adam", eta_max=1e-3, eta_min=1e-5, seed=args.seed)
    for name in args.variants.split(","):
        t0 = time.perf_counter()
        model = ClickGuardModel.init(with_ablation(ModelConfig(), name), seed=args.seed)
        train(model, split, cfg, validate=False)
        acc = evaluate(model, split.test).accuracy
        print(f"{name:<18} {ABLATION_ROWS.get(name, ''):<44} acc {acc:.4f}  {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
