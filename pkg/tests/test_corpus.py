import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from baitcheck.corpus import (
    ClassWeights, HeadlineRecord, binarize_label, compute_class_weights, filter_length, load_dataset,
    stratified_split,
)
from baitcheck.errors import DatasetError, DegenerateClassError, EmptyDatasetError, InvalidLabelError


def records(n0, n1):
    return [HeadlineRecord(f"headline number {i}", int(i >= n0)) for i in range(n0 + n1)]


class TestBinarize:
    @pytest.mark.parametrize("score,label", [(0.0, 0), (0.33, 0), (0.66, 1), (1.0, 1),
                                             ("0.3333", 0), (0.664, 1), (0.996, 1)])
    def test_levels(self, score, label):
        assert binarize_label(score) == label

    @pytest.mark.parametrize("score", [0.5, 0.2, 0.34, -0.1, 1.2, "abc", None])
    def test_rejects_other_values(self, score):
        with pytest.raises(InvalidLabelError):
            binarize_label(score)

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_total_on_levels_only(self, s):
        near = any(abs(s - lv) <= 0.005 for lv in (0.0, 0.33, 0.66, 1.0))
        if near:
            assert binarize_label(s) in (0, 1)
        else:
            with pytest.raises(InvalidLabelError):
                binarize_label(s)


class TestRecord:
    def test_empty_text_rejected(self):
        with pytest.raises(DatasetError):
            HeadlineRecord("   ", 0)

    def test_label_must_match_score(self):
        HeadlineRecord("a b", 1, raw_score=0.66)
        with pytest.raises(InvalidLabelError):
            HeadlineRecord("a b", 0, raw_score=0.66)

    def test_label_range(self):
        with pytest.raises(InvalidLabelError):
            HeadlineRecord("a b", 2)


class TestLoad:
    def test_csv_missing_label_dropped(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("headline,label\nFirst one,1\nSecond one,\nThird one,0\n", encoding="utf-8")
        c = load_dataset(p)
        assert [r.text for r in c] == ["First one", "Third one"]
        assert c.dropped == 1
        assert [r.index for r in c] == [0, 1]

    def test_jsonl_graded_score(self, tmp_path):
        p = tmp_path / "d.jsonl"
        lines = [{"text": "a thing", "truthMean": 0.66}, {"text": "b thing", "truthMean": 0.33},
                 {"text": "c thing", "label": 1}]
        p.write_text("\n".join(json.dumps(x) for x in lines) + "\n", encoding="utf-8")
        c = load_dataset(p)
        assert [r.label for r in c] == [1, 0, 1]
        assert c[0].raw_score == pytest.approx(0.66)

    def test_tsv_and_custom_columns(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("title\tclickbait\nYou will cry\t1\nRates held\t0\n", encoding="utf-8")
        c = load_dataset(p, text_column="title", label_column="clickbait")
        assert c.labels.tolist() == [1, 0]

    def test_text_labels(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("headline,label\nx y,clickbait\nz w,no-clickbait\n", encoding="utf-8")
        assert load_dataset(p).labels.tolist() == [1, 0]

    def test_malformed_rows_counted(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("headline,label\ngood,1\nbad,7\nworse,maybe\n", encoding="utf-8")
        c = load_dataset(p)
        assert len(c) == 1 and c.malformed == 2

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("", encoding="utf-8")
        with pytest.raises(EmptyDatasetError):
            load_dataset(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nope.csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "x.csv", format="xml")


class TestClassWeights:
    def test_balanced(self):
        assert compute_class_weights([0] * 5 + [1] * 5) == ClassWeights(1.0, 1.0)

    def test_third_dataset_counts(self):
        # 1574 non-clickbait / 814 clickbait headlines
        w = compute_class_weights([0] * 1574 + [1] * 814)
        assert w.w0 == pytest.approx(2388 / 3148, rel=1e-15)
        assert w.w1 == pytest.approx(2388 / 1628, rel=1e-15)
        np.testing.assert_allclose([w.w0, w.w1], [0.758576874205845, 1.4668304668304668], rtol=1e-14)

    def test_single_class(self):
        with pytest.raises(DegenerateClassError):
            compute_class_weights([1, 1, 1])

    @given(st.integers(1, 500), st.integers(1, 500))
    def test_weighted_count_identity(self, n0, n1):
        w = compute_class_weights([0] * n0 + [1] * n1)
        np.testing.assert_allclose([w.w0 * n0, w.w1 * n1], [(n0 + n1) / 2] * 2, rtol=1e-12)


class TestSplit:
    def test_small_example(self):
        s = stratified_split(records(6, 4), 0.8, seed=0)
        assert sum(r.label == 0 for r in s.train) == 5
        assert sum(r.label == 1 for r in s.train) == 3

    def test_deterministic(self):
        recs = records(30, 17)
        a, b = stratified_split(recs, 0.8, 5), stratified_split(recs, 0.8, 5)
        assert a.train == b.train and a.test == b.test

    def test_seed_changes_split(self):
        recs = records(30, 17)
        assert stratified_split(recs, 0.8, 1).train != stratified_split(recs, 0.8, 2).train

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5, -0.2])
    def test_bad_ratio(self, ratio):
        with pytest.raises(ValueError):
            stratified_split(records(5, 5), ratio)

    def test_too_few_per_class(self):
        with pytest.raises(DegenerateClassError):
            stratified_split(records(5, 1), 0.8)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 10 ** 6))
    def test_partition_and_stratification(self, n0, n1, ratio, seed):
        recs = records(n0, n1)
        s = stratified_split(recs, ratio, seed)
        ids = sorted(id(r) for r in s.train + s.test)
        assert ids == sorted(id(r) for r in recs)
        assert not {id(r) for r in s.train} & {id(r) for r in s.test}
        for c, n in ((0, n0), (1, n1)):
            k = sum(r.label == c for r in s.train)
            assert abs(k - round(ratio * n)) <= 1
            assert 1 <= k <= n - 1


def test_filter_length():
    recs = [HeadlineRecord("one", 0), HeadlineRecord("one two three", 1)]
    assert filter_length(recs, min_words=2) == [recs[1]]
    assert filter_length(recs, max_words=1) == [recs[0]]
