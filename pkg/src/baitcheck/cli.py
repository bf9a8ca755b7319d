"""Command-line entry point: ``baitcheck <command> [flags]``.

Exit codes: 0 success, 2 input or config error, 3 numerical divergence,
4 corrupt checkpoint.
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .corpus import Corpus, DatasetSplit, load_dataset, stratified_split
from .dumps import dump_features
from .errors import BaitcheckError, CheckpointError, DivergenceError
from .feats import FEATURE_NAMES, feature_matrix, write_feature_csv
from .ssafb import ABLATIONS, ClickGuardModel, ModelConfig, with_ablation
from .train import TrainConfig, evaluate, train
from .trust import (
    KINDS, PerturbationSpec, TrustReport, avg_prediction_change, default_kernel_width, export_radar,
    lime_explain, pfi_table, write_radar_csv,
)

log = logging.getLogger("baitcheck")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_CORRUPT = 0, 2, 3, 4


class UsageError(BaitcheckError):
    pass


@dataclass
class RunConfig:
    """Everything a command needs; loaded from ``key = value`` lines.

    Top-level keys are the fields below. Model and training settings use
    ``model.<field>`` and ``train.<field>`` with the defaults of
    ``ModelConfig`` and ``TrainConfig``.
    """

    dataset: str = ""
    format: str = ""                   # csv / tsv / jsonl; empty = from the file suffix
    text_column: str = ""              # empty = headline (csv/tsv) or text (jsonl)
    label_column: str = "label"
    score_column: str = "truthMean"
    out: str = "run"
    seed: int = 0
    ablation: str = "full"
    split_ratio: float = 0.8
    max_records: int = 0               # 0 = use every record; else a stratified subsample
    deletion_prob: float = 0.1
    typo_prob: float = 0.1
    max_synonym_swaps: int = 2
    kinds: str = ",".join(KINDS)
    pfi_repeats: int = 5
    pfi_metric: str = "accuracy"
    lime_samples: int = 1000
    lime_kernel_width: float = 0.0     # 0 = 0.75 * sqrt(n_features)
    top: int = 5
    records: str = "0"                 # record ids to explain, comma separated
    dump_stages: str = ""              # comma separated; empty = no dumps
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "RunConfig":
        top = {f.name: f for f in fields(cls) if f.name not in ("model", "train")}
        model_kw, train_kw, top_kw = {}, {}, {}
        for key, raw in pairs.items():
            if key.startswith("model."):
                model_kw[key[6:]] = _parse_value(raw)
            elif key.startswith("train."):
                train_kw[key[6:]] = _parse_value(raw)
            elif key in top:
                top_kw[key] = _coerce(raw, top[key].type)
            else:
                raise UsageError(f"unknown config key {key!r}")
        for k, v in top_kw.items():
            if v is None:
                raise UsageError(f"config key {k!r} needs a value")
        cfg = cls(**top_kw)
        cfg.model = ModelConfig.from_dict(model_kw)
        cfg.train = TrainConfig.from_dict(train_kw)
        return cfg


def _parse_value(raw: str):
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        return raw.strip()


def _coerce(raw: str, typ):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"bad numeric value {raw!r}") from exc
    return raw.strip()


def read_config_file(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


# ---------------------------------------------------------------------------
# shared steps


def _config(args) -> RunConfig:
    pairs = read_config_file(args.config) if args.config else {}
    for flag in ("dataset", "format", "seed", "ablation", "out", "kinds", "top"):
        v = getattr(args, flag, None)
        if v is not None:
            pairs[flag] = str(v)
    if getattr(args, "record", None):
        pairs["records"] = ",".join(str(r) for r in args.record)
    if getattr(args, "epochs", None) is not None:
        pairs["train.epochs"] = str(args.epochs)
    cfg = RunConfig.from_pairs(pairs)
    if cfg.ablation not in ABLATIONS:
        raise UsageError(f"unknown ablation {cfg.ablation!r}; choose from {sorted(ABLATIONS)}")
    cfg.model = with_ablation(cfg.model, cfg.ablation)
    if "train.seed" not in pairs:
        cfg.train = replace(cfg.train, seed=cfg.seed)
    return cfg


def _load(cfg: RunConfig) -> Corpus:
    if not cfg.dataset:
        raise UsageError("no dataset given (--dataset or 'dataset = ...')")
    corpus = load_dataset(cfg.dataset, format=cfg.format or None, text_column=cfg.text_column or None,
                          label_column=cfg.label_column, score_column=cfg.score_column)
    if cfg.max_records and len(corpus) > cfg.max_records:
        kept = stratified_split(list(corpus), cfg.max_records / len(corpus), cfg.seed).train
        corpus = Corpus(kept, corpus.dropped, corpus.malformed)
    return corpus


def _split(cfg: RunConfig, corpus) -> DatasetSplit:
    return stratified_split(list(corpus), cfg.split_ratio, cfg.seed)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint_path(args, cfg) -> Path:
    return Path(args.checkpoint) if getattr(args, "checkpoint", None) else Path(cfg.out) / "checkpoint.json"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _print(obj) -> None:
    print(json.dumps(obj, indent=1))


# ---------------------------------------------------------------------------
# commands


def cmd_extract_features(args) -> int:
    cfg = _config(args)
    corpus = _load(cfg)
    out = _out(cfg)
    X = feature_matrix(corpus.texts)
    write_feature_csv(out / "features.csv", X, corpus.labels)
    summary = {
        "rows": len(corpus), "dropped": corpus.dropped, "malformed": corpus.malformed,
        "class_counts": {str(c): int((corpus.labels == c).sum()) for c in (0, 1)},
        "columns": {n: {"mean": float(X[:, j].mean()), "std": float(X[:, j].std()),
                        "min": float(X[:, j].min()), "max": float(X[:, j].max())}
                    for j, n in enumerate(FEATURE_NAMES)},
    }
    _write_json(out / "features_summary.json", summary)
    if args.radar:
        write_radar_csv(out / "radar.csv", export_radar(matrix=X, labels=corpus.labels))
    _print({k: summary[k] for k in ("rows", "dropped", "malformed", "class_counts")})
    return EXIT_OK


def run_training(cfg: RunConfig, corpus) -> tuple[ClickGuardModel, DatasetSplit, dict]:
    out = _out(cfg)
    split = _split(cfg, corpus)
    model = ClickGuardModel.init(cfg.model, seed=cfg.seed)
    model.fit_preprocessing(split.train, seed=cfg.seed)
    stages = [s for s in cfg.dump_stages.split(",") if s.strip()]
    hook = None
    if stages:
        def hook(epoch, m, _history):
            dump_features(m, split.test, epoch, stages, out)
        dump_features(model, split.test, 0, stages, out)
    model, history = train(model, split, cfg.train, on_epoch_end=hook)
    model.save(out / "checkpoint.json")
    history.write_csv(out / "history.csv")
    history.write_json(out / "history.json")
    metrics = evaluate(model, split.test).to_dict()
    summary = {
        "ablation": cfg.ablation,
        "ablation_tag": model.config.ablation_tag(),
        "flags": {k: getattr(model.config, k) for k in
                  ("use_contextual", "use_sfg", "use_pos", "use_mha", "use_ssafb", "alpha_mode")},
        "seed": cfg.seed,
        "train_size": len(split.train),
        "test_size": len(split.test),
        "selected_features": list(model.rfe.kept),
        "test_metrics": metrics,
    }
    _write_json(out / "train_summary.json", summary)
    return model, split, summary


def cmd_train(args) -> int:
    cfg = _config(args)
    _, _, summary = run_training(cfg, _load(cfg))
    _print({"ablation": summary["ablation"], "test_metrics": summary["test_metrics"]})
    return EXIT_OK


def _model_and_split(args, cfg):
    model = ClickGuardModel.load(_checkpoint_path(args, cfg))
    corpus = _load(cfg)
    return model, corpus, _split(cfg, corpus)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    model, _, split = _model_and_split(args, cfg)
    metrics = evaluate(model, split.test).to_dict()
    _write_json(_out(cfg) / "metrics.json", metrics)
    _print(metrics)
    return EXIT_OK


def _kinds(cfg) -> list[str]:
    kinds = [k.strip() for k in cfg.kinds.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise UsageError(f"unknown perturbation kind {k!r}; choose from {KINDS}")
    return kinds


def perturbation_section(model, records, cfg) -> TrustReport:
    report = TrustReport(seed=cfg.seed)
    for i, kind in enumerate(_kinds(cfg)):
        spec = PerturbationSpec(kind, seed=cfg.seed + i, deletion_prob=cfg.deletion_prob,
                                typo_prob=cfg.typo_prob, max_synonym_swaps=cfg.max_synonym_swaps)
        report.perturbation[kind] = avg_prediction_change(model, records, spec)
        report.perturbation_params = spec.params()
    return report


def explanation_section(model, corpus, split, cfg, report: TrustReport) -> TrustReport:
    report.pfi = pfi_table(model, split.test, cfg.pfi_repeats, cfg.pfi_metric, cfg.seed)
    by_id = {r.index: r for r in corpus}
    kw = cfg.lime_kernel_width or default_kernel_width(model.config.n_features)
    for rid in [s.strip() for s in cfg.records.split(",") if s.strip()]:
        try:
            rec = by_id[int(rid)]
        except (ValueError, KeyError) as exc:
            raise UsageError(f"no record with id {rid!r}") from exc
        report.lime.append(lime_explain(model, rec, cfg.lime_samples, kw, cfg.top,
                                        seed=cfg.seed, record_id=int(rid)))
    return report


def cmd_perturb(args) -> int:
    cfg = _config(args)
    model, _, split = _model_and_split(args, cfg)
    report = perturbation_section(model, split.test, cfg)
    report.write(_out(cfg), "perturbation_report.json")
    _print(report.perturbation)
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = _config(args)
    model, corpus, split = _model_and_split(args, cfg)
    report = explanation_section(model, corpus, split, cfg, TrustReport(seed=cfg.seed))
    report.write(_out(cfg), "explain_report.json")
    _print({"pfi": {r.feature: r.importance for r in report.pfi},
            "lime": {str(e.record_id): dict(zip(e.features, e.weights)) for e in report.lime}})
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    corpus = _load(cfg)
    out = _out(cfg)
    X = feature_matrix(corpus.texts)
    write_feature_csv(out / "features.csv", X, corpus.labels)
    model, split, summary = run_training(cfg, corpus)
    _write_json(out / "metrics.json", summary["test_metrics"])
    report = perturbation_section(model, split.test, cfg)
    explanation_section(model, corpus, split, cfg, report)
    report.radar = export_radar(matrix=X, labels=corpus.labels)
    report.write(out)
    _print({"ablation": summary["ablation"], "test_metrics": summary["test_metrics"],
            "perturbation": report.perturbation})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="baitcheck", description="Clickbait detection pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--dataset", help="CSV, TSV or JSONL dataset")
        sp.add_argument("--format", choices=("csv", "tsv", "jsonl"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--ablation", help=f"one of {', '.join(ABLATIONS)}")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if checkpoint:
            sp.add_argument("--checkpoint", help="checkpoint JSON (default <out>/checkpoint.json)")

    sp = sub.add_parser("extract-features", help="write the 18 structural counts per headline")
    common(sp)
    sp.add_argument("--radar", action="store_true", help="also write radar.csv")
    sp.set_defaults(func=cmd_extract_features)

    sp = sub.add_parser("train", help="fit scaler/RFE, train, write checkpoint and history")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="metrics of a checkpoint on the test split")
    common(sp, checkpoint=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("perturb", help="average prediction change per perturbation kind")
    common(sp, checkpoint=True)
    sp.add_argument("--kinds", help="comma separated subset of " + ",".join(KINDS))
    sp.set_defaults(func=cmd_perturb)

    sp = sub.add_parser("explain", help="permutation importance and local surrogate explanations")
    common(sp, checkpoint=True)
    sp.add_argument("--record", action="append", type=int, help="record id to explain (repeatable)")
    sp.add_argument("--top", type=int, help="number of surrogate features to report")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("pipeline", help="extract, train, evaluate, perturb and explain in one go")
    common(sp)
    sp.add_argument("--kinds")
    sp.add_argument("--record", action="append", type=int)
    sp.add_argument("--top", type=int)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: corrupt checkpoint: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (BaitcheckError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
