import numpy as np
import pytest

from baitcheck.corpus import stratified_split
from baitcheck.ssafb import ClickGuardModel, ModelConfig
from baitcheck.synthetic import separable_corpus


def tiny_config(**overrides) -> ModelConfig:
    """A model small enough for finite-difference checks."""
    base = dict(d_model=8, max_len=6, vocab_buckets=64, heads=4, fusion_dim=8,
                x1_hidden=4, x2_hidden=4, y1_hidden=4, y2_hidden=4, bilstm_hidden=4,
                conv_filters=3, conv_window=3, dense_hidden=4)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def corpus():
    return separable_corpus(80, seed=0)


@pytest.fixture(scope="session")
def split(corpus):
    return stratified_split(corpus, 0.8, 0)


@pytest.fixture
def tiny_model(split):
    model = ClickGuardModel.init(tiny_config(), seed=3)
    model.fit_preprocessing(split.train)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
