import numpy as np
import pytest

from adda.data import easy_compositions, generate_synthetic
from adda.trainer import TrainConfig


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(num_classes=4, per_class=24, hw=(8, 8), seed=5)


@pytest.fixture
def tiny_config(tmp_path):
    def make(**overrides):
        base = dict(
            compositions=easy_compositions(),
            batch_size=32,
            epochs=3,
            lr=0.05,
            queue_size=64,
            hidden_dim=16,
            embed_dim=8,
            metrics_path=str(tmp_path / "metrics.csv"),
            checkpoint_path=str(tmp_path / "ckpt.adck"),
        )
        base.update(overrides)
        return TrainConfig(**base)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion; returns the outcome."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
