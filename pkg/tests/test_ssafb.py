import json
from dataclasses import replace

import numpy as np
import pytest

from baitcheck import layers as Ly
from baitcheck import tensor as T
from baitcheck.corpus import HeadlineRecord
from baitcheck.errors import CheckpointError, ConfigError, NotFittedError, ShapeError
from baitcheck.ssafb import (
    ABLATIONS, AdaptiveWeighting, ClickGuardModel, ModelConfig, adaptive_weight, checkpoint_dict,
    classify, load_checkpoint, model_from_checkpoint, param_shapes, pathway1_forward, pathway2_forward,
    with_ablation,
)
from baitcheck.tensor import Tensor, gradient_check

from conftest import tiny_config


def site(a0, a1, mode="learned_alpha"):
    return AdaptiveWeighting(Tensor(np.array([a0, a1]), requires_grad=True), mode)


class TestAdaptiveWeighting:
    def test_fixed_is_mean(self, rng):
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        np.testing.assert_allclose(adaptive_weight(a, b, site(3.0, -1.0, "fixed_equal")).data, (a + b) / 2, atol=1e-15)

    def test_zero_alphas_equal_fixed(self, rng):
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        np.testing.assert_array_equal(adaptive_weight(a, b, site(0.0, 0.0)).data,
                                      adaptive_weight(a, b, site(0.0, 0.0, "fixed_equal")).data)

    def test_saturation(self, rng):
        a, b = rng.standard_normal(5) + 3.0, rng.standard_normal(5)
        np.testing.assert_allclose(adaptive_weight(a, b, site(10.0, -10.0)).data, a, rtol=1e-4)

    @pytest.mark.parametrize("alphas", [(0.0, 0.0), (5.0, -3.0), (-700.0, 20.0), (1e-3, 2e-3)])
    def test_weights_on_simplex(self, alphas):
        w = site(*alphas).weights().data
        assert w[0] + w[1] == pytest.approx(1.0, abs=1e-15)
        assert (w >= 0).all() and (w <= 1).all()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adaptive_weight(np.ones(3), np.ones(4), site(0.0, 0.0))

    def test_gradient(self, rng):
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        c = rng.standard_normal(4)
        f = lambda t: T.sum(adaptive_weight(a, b, AdaptiveWeighting(t)) * c)
        assert gradient_check(f, np.array([0.3, -0.2])) < 1e-6


class TestConfig:
    def test_needs_some_input(self):
        with pytest.raises(ConfigError):
            ModelConfig(use_contextual=False, use_sfg=False, use_pos=False)

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            ModelConfig(alpha_mode="random")
        with pytest.raises(ConfigError):
            ModelConfig(d_model=10)
        with pytest.raises(ConfigError):
            ModelConfig(encoder_mode="precomputed_file")
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"d_modell": 3})

    def test_ablation_presets(self):
        c = with_ablation(ModelConfig(), "structural-only")
        assert (c.use_contextual, c.use_sfg, c.use_pos) == (False, True, True)
        for name in ABLATIONS:
            assert with_ablation(ModelConfig(), name).ablation_tag() == name
        with pytest.raises(ConfigError):
            with_ablation(ModelConfig(), "everything")

    def test_shapes_derivable_from_config(self):
        for name in ABLATIONS:
            cfg = with_ablation(tiny_config(), name)
            m = ClickGuardModel.init(cfg, seed=1)
            assert {k: v.shape for k, v in m.params.items()} == param_shapes(cfg)


class TestPathways:
    def test_pathway1_shape_any_length(self, tiny_model, rng):
        for L in (1, 3, 9):
            assert pathway1_forward(rng.standard_normal((L, 8)), tiny_model).shape == (8,)
            assert pathway1_forward(rng.standard_normal((2, L, 8)), tiny_model).shape == (2, 8)

    def test_pathway1_identical_adjusted_vectors(self, tiny_model, rng):
        m = ClickGuardModel(replace(tiny_model.config, alpha_mode="fixed_equal"), tiny_model.params)
        v = rng.uniform(0.1, 1.0, 8)
        for pre in ("p1.fdiff", "p1.adj_x1", "p1.adj_x2"):
            m.params[f"{pre}.W"].data[:] = 0.0
            m.params[f"{pre}.b"].data[:] = v
        np.testing.assert_allclose(pathway1_forward(rng.standard_normal((4, 8)), m).data, v, rtol=1e-15)

    def test_pathway1_zero_lstms(self, tiny_model, rng):
        m = tiny_model
        for pre in ("p1.lstm_x1", "p1.lstm_x2"):
            for k in "WUb":
                m.params[f"{pre}.{k}"].data[:] = 0.0
        for s in ("x_first", "x_second"):
            m.params[f"alpha.{s}"].data[:] = rng.standard_normal(2)
        for pre in ("p1.adj_x1", "p1.adj_x2"):
            m.params[f"{pre}.b"].data[:] = rng.standard_normal(8)
        Fc = rng.standard_normal((5, 8))
        p = m.params
        relu = lambda z: np.maximum(z, 0.0)
        F_diff = relu(Fc.max(axis=0) @ p["p1.fdiff.W"].data + p["p1.fdiff.b"].data)
        w1 = np.exp(p["alpha.x_first"].data) / np.exp(p["alpha.x_first"].data).sum()
        w2 = np.exp(p["alpha.x_second"].data) / np.exp(p["alpha.x_second"].data).sum()
        X3 = w1[0] * F_diff + w1[1] * relu(p["p1.adj_x1.b"].data)
        X3 = w2[0] * X3 + w2[1] * relu(p["p1.adj_x2.b"].data)
        np.testing.assert_allclose(pathway1_forward(Fc, m).data, X3, atol=1e-14)

    def test_pathway2_contract(self, tiny_model, rng):
        f = rng.standard_normal(10)
        y = pathway2_forward(f, tiny_model)
        assert y.shape == (8,)
        np.testing.assert_array_equal(y.data, pathway2_forward(f, tiny_model).data)
        assert pathway2_forward(rng.standard_normal((3, 10)), tiny_model).shape == (3, 8)
        with pytest.raises(ShapeError):
            pathway2_forward(np.ones(9), tiny_model)

    def test_pathway2_zero_input_ignores_input_weights(self, tiny_model, rng):
        m = tiny_model
        m.params["p2.conv.b"].data[:] = 0.0
        before = pathway2_forward(np.zeros(10), m).data
        m.params["p2.conv.W"].data[:] = rng.standard_normal(m.params["p2.conv.W"].shape)
        for pre in ("p2.bilstm_fwd", "p2.bilstm_bwd"):
            m.params[f"{pre}.W"].data[:] = rng.standard_normal(m.params[f"{pre}.W"].shape)
        np.testing.assert_array_equal(pathway2_forward(np.zeros(10), m).data, before)

    def test_pathway2_dropout_only_in_training(self, tiny_model, rng):
        f = rng.standard_normal((4, 10))
        a = pathway2_forward(f, tiny_model, training=True, rng=np.random.default_rng(0)).data
        b = pathway2_forward(f, tiny_model, training=True, rng=np.random.default_rng(0)).data
        np.testing.assert_array_equal(a, b)


class TestClassify:
    def test_zero_head_gives_half(self, tiny_model, rng):
        tiny_model.params["head.out.W"].data[:] = 0.0
        tiny_model.params["head.out.b"].data[:] = 0.0
        p = classify(rng.standard_normal((3, 8)), rng.standard_normal((3, 8)), tiny_model)
        np.testing.assert_array_equal(p.data, 0.5)

    def test_range_and_shapes(self, tiny_model, rng):
        p = classify(10 * rng.standard_normal((50, 8)), 10 * rng.standard_normal((50, 8)), tiny_model).data
        assert p.shape == (50,) and ((p > 0) & (p < 1)).all()
        with pytest.raises(ShapeError):
            classify(np.ones(8), np.ones(7), tiny_model)

    def test_gradient(self, tiny_model, rng):
        X3, Y3 = rng.standard_normal((2, 8)), rng.standard_normal((2, 8))
        assert gradient_check(lambda t: T.sum(classify(t, Y3, tiny_model)), X3, kink_tol=1e-3) < 1e-4
        for name in ("head.dense.W", "head.out.W", "head.dense.b"):
            def f(t, name=name):
                m = ClickGuardModel(tiny_model.config, {**tiny_model.params, name: t})
                return T.sum(classify(X3, Y3, m))
            assert gradient_check(f, tiny_model.params[name].data, kink_tol=1e-3) < 1e-4


def end_to_end_error(model, inputs, name, max_coords=12):
    y = inputs.labels

    def loss(t):
        m = ClickGuardModel(model.config, {**model.params, name: t}, model.scaler, model.rfe)
        p = m.forward(inputs)
        return T.sum(T.log(p) * y + T.log(1.0 - p) * (1.0 - y)) * -1.0

    return gradient_check(loss, model.params[name].data, kink_tol=1e-4, max_coords=max_coords, seed=1)


class TestForward:
    def test_batch_of_n(self, tiny_model, split):
        p = tiny_model.predict_proba(split.test)
        assert p.shape == (len(split.test),) and ((p > 0) & (p < 1)).all()

    def test_identical_headlines(self, tiny_model):
        p = tiny_model.predict_proba(["You Won't Believe This!", "Rates held", "You Won't Believe This!"])
        assert p[0] == p[2]

    def test_batch_composition_invariance(self, tiny_model, split):
        recs = split.test[:6]
        together = tiny_model.predict_proba(recs)
        for i, r in enumerate(recs):
            np.testing.assert_allclose(tiny_model.predict_proba([r])[0], together[i], rtol=1e-13, atol=0)
        np.testing.assert_allclose(tiny_model.predict_proba(recs[::-1])[::-1], together, rtol=1e-13, atol=0)

    def test_not_fitted(self):
        m = ClickGuardModel.init(tiny_config())
        with pytest.raises(NotFittedError):
            m.predict_proba(["hello there"])

    def test_fixed_equal_bit_identical_to_zero_alphas(self, tiny_model, split):
        inputs = tiny_model.prepare(split.test)
        for s in ("x_first", "x_second", "y_first", "y_second"):
            tiny_model.params[f"alpha.{s}"].data[:] = 0.0
        learned = tiny_model.forward(inputs).data
        fixed = ClickGuardModel(replace(tiny_model.config, alpha_mode="fixed_equal"), tiny_model.params,
                                tiny_model.scaler, tiny_model.rfe)
        np.testing.assert_array_equal(fixed.forward(inputs).data, learned)

    def test_structural_only_ignores_text_tokens(self, split, rng):
        m = ClickGuardModel.init(with_ablation(tiny_config(), "structural-only"), seed=2)
        m.fit_preprocessing(split.train)
        inputs = m.prepare(split.test)
        base = m.forward(inputs).data
        scrambled = replace(inputs, token_ids=rng.integers(0, 64, inputs.token_ids.shape))
        np.testing.assert_array_equal(m.forward(scrambled).data, base)
        moved = inputs.with_features(rng.standard_normal(inputs.features.shape))
        assert not np.array_equal(m.forward(moved).data, base)

    def test_contextual_only_ignores_features(self, split, rng):
        m = ClickGuardModel.init(with_ablation(tiny_config(), "contextual-only"), seed=2)
        m.fit_preprocessing(split.train)
        inputs = m.prepare(split.test)
        base = m.forward(inputs).data
        moved = inputs.with_features(rng.standard_normal(inputs.features.shape))
        np.testing.assert_array_equal(m.forward(moved).data, base)
        scrambled = replace(inputs, token_ids=rng.integers(1, 64, inputs.token_ids.shape))
        assert not np.array_equal(m.forward(scrambled).data, base)

    def test_group_masking(self, split):
        m = ClickGuardModel.init(with_ablation(tiny_config(), "sfg-only"), seed=0)
        m.fit_preprocessing(split.train)
        # only the five surface counts can carry information
        names = [n for n, s in zip(m.rfe.names, m.group_mask()) if s == 0]
        kept_pos = [n for n in m.rfe.kept if n in names]
        cols = [m.rfe.kept.index(n) for n in kept_pos]
        assert all(m.scaler.degenerate[c] for c in cols)

    @pytest.mark.parametrize("ablation", ["full", "no-mha", "structural-only", "contextual-only"])
    def test_end_to_end_gradient(self, split, ablation):
        m = ClickGuardModel.init(with_ablation(tiny_config(), ablation), seed=5)
        m.fit_preprocessing(split.train)
        inputs = m.prepare(split.test[:2])
        names = [n for n in m.params if not n.startswith("alpha.") or ablation == "full"]
        for name in names:
            if name == "encoder.table":
                continue
            err = end_to_end_error(m, inputs, name)
            assert err < 1e-3, (name, err)

    def test_end_to_end_gradient_embedding_rows(self, split):
        m = ClickGuardModel.init(tiny_config(), seed=5)
        m.fit_preprocessing(split.train)
        inputs = m.prepare(split.test[:2])
        used = np.unique(inputs.token_ids[inputs.mask > 0])
        y = inputs.labels
        full = m.params["encoder.table"].data

        def f(t):
            mm = ClickGuardModel(m.config, {**m.params, "encoder.table": t}, m.scaler, m.rfe)
            p = mm.forward(inputs)
            return T.sum(T.log(p) * y + T.log(1.0 - p) * (1.0 - y)) * -1.0

        probe = Tensor(full.copy(), requires_grad=True)
        T.backward(f(probe))
        assert np.abs(np.delete(probe.grad, used, axis=0)).max() == 0.0
        assert gradient_check(f, full, kink_tol=1e-4, max_coords=None if full.size < 600 else 600) < 1e-3


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tiny_model, split, tmp_path):
        tiny_model.save(tmp_path / "m.json")
        again = ClickGuardModel.load(tmp_path / "m.json")
        np.testing.assert_array_equal(again.predict_proba(split.test), tiny_model.predict_proba(split.test))
        assert again.rfe == tiny_model.rfe
        assert (tmp_path / "m.json").read_bytes() == (again.save(tmp_path / "n.json") or (tmp_path / "n.json").read_bytes())

    def test_envelope_fields(self, tiny_model):
        env = checkpoint_dict(tiny_model)
        assert set(env) == {"format_version", "config", "scaler", "rfe_selection", "tensors", "checksum"}
        t = env["tensors"][0]
        assert set(t) == {"name", "shape", "dtype", "data_base64"} and t["dtype"] == "float64"

    def test_tampered_byte(self, tiny_model, tmp_path):
        p = tmp_path / "m.json"
        tiny_model.save(p)
        raw = bytearray(p.read_bytes())
        i = raw.index(b'"data_base64": "') + 20
        raw[i] = ord("A") if raw[i] != ord("A") else ord("B")
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_shape_mismatch_even_with_valid_checksum(self, tiny_model):
        env = checkpoint_dict(tiny_model)
        env["config"]["fusion_dim"] = 16
        from baitcheck.ssafb import _digest
        env["checksum"] = _digest(env)
        with pytest.raises(CheckpointError, match="shape"):
            model_from_checkpoint(env)

    def test_garbage(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "bad.json")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.json")


class TestPrecomputed:
    def test_file_mode(self, split, tmp_path, rng):
        recs = [replace(r, index=i) for i, r in enumerate(split.train + split.test)]
        arr = rng.standard_normal((len(recs), 6, 8)).astype(np.float32)
        arr[:, 4:] = 0.0
        Ly.write_embedding_file(tmp_path / "emb.bin", arr)
        cfg = tiny_config(encoder_mode="precomputed_file", embedding_path=str(tmp_path / "emb.bin"))
        m = ClickGuardModel.init(cfg, seed=0)
        assert "encoder.table" not in m.params
        m.fit_preprocessing(recs[:64])
        inputs = m.prepare(recs[64:])
        np.testing.assert_array_equal(inputs.contextual, arr[64:].astype(np.float64))
        np.testing.assert_array_equal(inputs.mask[:, 4:], 0.0)
        p = m.predict_inputs(inputs)
        assert p.shape == (len(recs) - 64,)
        with pytest.raises(Exception):
            m.prepare([HeadlineRecord("no index here", 0)])
