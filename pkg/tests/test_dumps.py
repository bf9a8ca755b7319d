import csv

import numpy as np
import pytest

from baitcheck.dumps import STAGES, dump_features, stage_matrix
from baitcheck.errors import ConfigError
from baitcheck.feats import feature_matrix
from baitcheck.train import TrainConfig, train
from baitcheck.ssafb import ClickGuardModel

from conftest import tiny_config


def read(path):
    rows = list(csv.reader(open(path)))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


class TestDumps:
    def test_stage_widths(self, tiny_model, split):
        recs = split.test[:5]
        assert stage_matrix(tiny_model, recs, "contextual_raw").shape == (5, 8)
        assert stage_matrix(tiny_model, recs, "contextual_post_mha").shape == (5, 8)
        np.testing.assert_array_equal(stage_matrix(tiny_model, recs, "structural_pre_rfe"),
                                      feature_matrix([r.text for r in recs]))
        np.testing.assert_array_equal(stage_matrix(tiny_model, recs, "structural_post_rfe"),
                                      tiny_model.prepare(recs).features)

    def test_unknown_stage(self, tiny_model, split):
        with pytest.raises(ConfigError):
            stage_matrix(tiny_model, split.test, "logits")
        with pytest.raises(ConfigError):
            dump_features(tiny_model, split.test, 0, ["logits"], ".")

    def test_files_roundtrip(self, tiny_model, split, tmp_path):
        paths = dump_features(tiny_model, split.test, 3, STAGES, tmp_path)
        assert [p.name for p in paths] == [f"dump_e3_{s}.csv" for s in STAGES]
        for s, p in zip(STAGES, paths):
            header, M = read(p)
            assert header[0] == "label" and header[1] == "dim_0"
            np.testing.assert_array_equal(M[:, 0], [r.label for r in split.test])
            np.testing.assert_array_equal(M[:, 1:], stage_matrix(tiny_model, split.test, s))

    def test_epoch_hook_tracks_training(self, split, tmp_path):
        m = ClickGuardModel.init(tiny_config(), seed=0)
        m.fit_preprocessing(split.train)
        dump_features(m, split.test, 0, ["contextual_post_mha"], tmp_path)
        train(m, split, TrainConfig(epochs=1, optimizer="adam", eta_max=1e-2, eta_min=1e-3),
              on_epoch_end=lambda e, mm, h: dump_features(mm, split.test, e, ["contextual_post_mha"], tmp_path))
        _, before = read(tmp_path / "dump_e0_contextual_post_mha.csv")
        _, after = read(tmp_path / "dump_e1_contextual_post_mha.csv")
        assert before.shape == after.shape and not np.array_equal(before, after)
