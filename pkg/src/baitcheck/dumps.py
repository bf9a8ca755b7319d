"""Epoch-wise feature dumps for external projection (t-SNE, UMAP, ...)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from . import layers as Ly
from .errors import ConfigError
from .feats import feature_matrix

STAGES = ("contextual_raw", "contextual_post_mha", "structural_pre_rfe", "structural_post_rfe")


def stage_matrix(model, records, stage: str, inputs=None) -> np.ndarray:
    """One row per record for ``stage``.

    Contextual stages are the global max over positions of the encoder
    output (before / after attention), so each row has d_model entries.
    Structural stages are the 18 raw counts or the 10 selected, scaled values.
    """
    if stage not in STAGES:
        raise ConfigError(f"unknown dump stage {stage!r}; choose from {STAGES}")
    if stage == "structural_pre_rfe":
        return feature_matrix([r.text for r in records])
    inputs = model.prepare(list(records)) if inputs is None else inputs
    if stage == "structural_post_rfe":
        return np.asarray(inputs.features)
    E, Fc = model.contextual_features(inputs)
    return Ly.global_max_pool(E if stage == "contextual_raw" else Fc).data


def dump_path(out_dir, epoch: int, stage: str) -> Path:
    return Path(out_dir) / f"dump_e{epoch}_{stage}.csv"


def dump_features(model, records, epoch: int, stages: Sequence[str] = STAGES, out_dir=".") -> list[Path]:
    """Write ``dump_e{epoch}_{stage}.csv`` (``label,dim_0,...``) per stage, rows in record order."""
    stages = list(stages)
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"unknown dump stage {s!r}; choose from {STAGES}")
    records = list(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [r.label for r in records]
    inputs = None
    if any(s != "structural_pre_rfe" for s in stages):
        inputs = model.prepare(records)
    paths = []
    for s in stages:
        M = stage_matrix(model, records, s, inputs)
        p = dump_path(out, epoch, s)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"dim_{j}" for j in range(M.shape[1])])
            for lab, row in zip(labels, M):
                w.writerow([lab] + [repr(float(v)) for v in row])
        paths.append(p)
    return paths
