import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from baitcheck.errors import (
    AlignmentError, ConfigError, DegenerateClassError, InsufficientDataError, ShapeError,
)
from baitcheck.feats import (
    FEATURE_NAMES, POS_NAMES, SFG_NAMES, TAGSET, RfeSelection, ScalerParams, apply_scaler,
    extract_features, extract_pos_counts, extract_sfg, feature_matrix, fit_scaler, invert_scaler,
    pos_tag, rfe_select, select_columns, write_feature_csv,
)
from baitcheck.textprep import is_word, normalize, tokenize

WAITERS = "21 Secrets Chinese Restaurants Waiters Will Never Tell You"


def informative_data(seed=0, n=400):
    """10 columns = label * k + small noise, then 8 pure-noise columns."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    k = np.linspace(0.5, 2.0, 10)
    informative = y[:, None] * k + 0.3 * rng.standard_normal((n, 10))
    noise = rng.standard_normal((n, 8))
    return np.hstack([informative, noise]), y


class TestTagger:
    @pytest.mark.parametrize("tok,tag", [("you", "PRON_2P"), ("?", "PUNCT"), ("quickly", "ADV"),
                                         ("the", "DET"), ("in", "PREP"), ("my", "PRON_POSS"),
                                         ("we", "PRON_1P"), ("beautiful", "ADJ"), ("2020", "OTHER")])
    def test_closed_and_suffix_classes(self, tok, tag):
        assert pos_tag([tok]) == [tag]

    def test_unknown_word_falls_back_to_noun(self):
        assert pos_tag(["zorblax"]) == ["NOUN"]

    @given(st.lists(st.text(min_size=1, max_size=8), max_size=10))
    def test_one_tag_per_token(self, toks):
        tags = pos_tag(toks)
        assert len(tags) == len(toks)
        assert set(tags) <= set(TAGSET)


class TestCounts:
    def test_sfg_will_you(self):
        n = normalize("will you?")
        assert extract_sfg(n, tokenize(n)) == {"n_char": 9, "n_words": 2, "n_Qm": 1, "n_Em": 0, "n_hash": 0}

    def test_sfg_empty(self):
        assert set(extract_sfg("", tokenize("")).values()) == {0}

    def test_waiters_headline(self):
        f = extract_features(WAITERS)
        assert f["n_words"] == 9 and f["n_Qm"] == 0 and f["n_char"] == 58
        # tagger output: OTHER NOUN ADJ NOUN NOUN VERB ADV VERB PRON_2P; stop words "will", "you"
        expected = dict(P_fp=0, P_sp=1, P_pn=0, N=3, V=2, Adj=1, Adv=1, P=1, Prep=0, Punc=0, D=0,
                        St_w=2, Sl_w=0)
        assert f.pos == expected
        assert f.vector().shape == (18,)

    def test_direct_tally(self):
        c = extract_pos_counts(["PRON_2P", "VERB", "PUNCT"], ["you", "run", "!"])
        assert (c["P_sp"], c["V"], c["Punc"], c["P"]) == (1, 1, 1, 1)

    def test_empty_pos(self):
        assert set(extract_pos_counts([], []).values()) == {0}

    def test_misaligned(self):
        with pytest.raises(AlignmentError):
            extract_pos_counts(["NOUN"], ["a", "b"])

    def test_slang_and_marks(self):
        f = extract_features("omg!! #fail")
        assert f["n_Em"] == 2 and f["n_hash"] == 1 and f["Sl_w"] >= 1

    def test_whitespace_only(self):
        assert not extract_features("   \t ").vector().any()

    @settings(max_examples=150, deadline=None)
    @given(st.text(max_size=80))
    def test_invariants(self, s):
        f = extract_features(s)
        v = f.vector()
        assert (v >= 0).all()
        toks = tokenize(normalize(s)).tokens
        assert f["n_words"] == sum(is_word(t) for t in toks)
        assert f["n_Qm"] <= f["Punc"] and f["n_Em"] <= f["Punc"]
        for name in ("P_fp", "P_sp", "P_pn"):
            assert f[name] <= f["n_words"]
        assert f["n_char"] >= f["n_words"]
        np.testing.assert_array_equal(v, extract_features(s).vector())

    def test_feature_csv(self, tmp_path):
        X = feature_matrix(["will you?", WAITERS])
        write_feature_csv(tmp_path / "f.csv", X, [1, 0])
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0].split(",") == list(FEATURE_NAMES) + ["label"]
        assert len(lines) == 3
        assert FEATURE_NAMES == POS_NAMES + SFG_NAMES and len(FEATURE_NAMES) == 18


class TestScaler:
    def test_population_std(self):
        p = fit_scaler(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(p.means, [2.0])
        np.testing.assert_allclose(p.stds, [np.sqrt(2 / 3)], rtol=1e-15)
        assert not p.degenerate.any()

    @pytest.mark.parametrize("col,mean", [([5, 5, 5], 5.0), ([0, 0], 0.0)])
    def test_degenerate(self, col, mean):
        p = fit_scaler(np.array(col, dtype=float)[:, None])
        assert p.means[0] == mean and p.stds[0] == 1.0 and p.degenerate[0]
        np.testing.assert_array_equal(apply_scaler(np.array([[7.0]]), p), [[0.0]])

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_scaler(np.ones((1, 3)))

    def test_shape_mismatch(self):
        p = fit_scaler(np.random.default_rng(0).random((5, 10)))
        with pytest.raises(ShapeError):
            apply_scaler(np.zeros(17), p)

    def test_mean_maps_to_zero(self):
        p = fit_scaler(np.random.default_rng(0).random((5, 4)))
        np.testing.assert_allclose(apply_scaler(p.means, p), 0.0, atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                      elements=st.floats(-1e3, 1e3)))
    def test_fit_apply_invariants(self, m):
        p = fit_scaler(m)
        z = apply_scaler(m, p)
        ok = ~p.degenerate
        # well-conditioned columns only: relative spread far above rounding
        spread = m.std(axis=0) > 1e-6 * np.maximum(1.0, np.abs(m).max(axis=0))
        sel = ok & spread
        np.testing.assert_allclose(z[:, sel].mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z[:, sel].std(axis=0), 1.0, atol=1e-9)
        assert (z[:, p.degenerate] == 0).all()
        back = invert_scaler(apply_scaler(m, p), p)
        np.testing.assert_allclose(back[:, ok], m[:, ok], atol=1e-12 * max(1.0, np.abs(m).max()) * 1e3)

    def test_roundtrip_dict(self):
        p = fit_scaler(np.random.default_rng(2).random((6, 3)))
        q = ScalerParams.from_dict(json.loads(json.dumps(p.to_dict())))
        np.testing.assert_array_equal(p.means, q.means)
        np.testing.assert_array_equal(p.stds, q.stds)
        assert p.to_dict()["format_version"] == 1


class TestRfe:
    def test_recovers_informative(self):
        X, y = informative_data(0)
        sel = rfe_select(X, y, 10, seed=0)
        assert len(sel.kept) == 10
        informative = set(FEATURE_NAMES[:10])
        assert len(informative & set(sel.kept)) >= 8

    def test_structure(self):
        X, y = informative_data(1)
        sel = rfe_select(X, y)
        eliminated = [n for n, _ in sel.elimination_order]
        assert len(eliminated) == 8
        assert set(sel.kept) | set(eliminated) == set(FEATURE_NAMES)
        assert len(set(sel.kept) | set(eliminated)) == 18
        assert [r for _, r in sel.elimination_order] == list(range(1, 9))
        # kept keeps original column order and select_columns follows it
        assert list(sel.kept) == [n for n in FEATURE_NAMES if n in sel.kept]
        np.testing.assert_array_equal(select_columns(X, sel), X[:, sel.indices])

    def test_deterministic(self):
        X, y = informative_data(2)
        assert rfe_select(X, y, seed=4) == rfe_select(X, y, seed=4)

    def test_monotone_elimination(self):
        X, y = informative_data(3)
        full = rfe_select(X, y, 5)
        ten = rfe_select(X, y, 10)
        assert full.elimination_order[:8] == ten.elimination_order

    def test_errors(self):
        X, y = informative_data(0, n=40)
        with pytest.raises(ConfigError):
            rfe_select(X, y, 18)
        with pytest.raises(DegenerateClassError):
            rfe_select(X, np.ones(40))
        with pytest.raises(InsufficientDataError):
            rfe_select(X[:10], y[:10])
        with pytest.raises(ShapeError):
            rfe_select(X[:, :17], y)

    def test_constant_columns_go_first(self):
        X, y = informative_data(5)
        X[:, 3] = 0.0
        sel = rfe_select(X, y)
        assert sel.elimination_order[0][0] == FEATURE_NAMES[3]

    def test_roundtrip(self, tmp_path):
        X, y = informative_data(0)
        sel = rfe_select(X, y, seed=7)
        sel.save(tmp_path / "rfe.json")
        again = RfeSelection.from_dict(json.loads((tmp_path / "rfe.json").read_text()))
        assert again == sel
