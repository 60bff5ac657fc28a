import numpy as np
import pytest

from massgrasp.config import ExperimentConfig, get_material
from massgrasp.core import Dataset, GraspRecord, Patch


@pytest.fixture
def cfg():
    return ExperimentConfig()


@pytest.fixture
def coffee():
    return get_material("coffee")


def random_dataset(n, p=30, seed=0, name="coffee"):
    rng = np.random.default_rng(seed)
    recs = [
        GraspRecord(
            Patch(rng.normal(size=(2, p, p)).astype(np.float32), (int(rng.integers(15, 100)), int(rng.integers(15, 60)))),
            float(rng.integers(10, 40)),
        )
        for _ in range(n)
    ]
    return Dataset(recs, name, seed)


ACCEPTANCE: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
