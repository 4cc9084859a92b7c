from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from moldiff import _kernels
from moldiff.descgen import load_dataset, load_names
from moldiff.tokenizer import build_vocab

DATA = Path(__file__).resolve().parents[1] / "src" / "moldiff" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def corpus() -> list[str]:
    return (DATA / "corpus.smi").read_text(encoding="utf-8").split()


@pytest.fixture(scope="session")
def corpus_vocab(corpus):
    return build_vocab(corpus)


@pytest.fixture(scope="session")
def toy_records():
    records, errors = load_dataset(DATA / "toy_mmp.jsonl")
    assert not errors
    return records


@pytest.fixture(scope="session")
def toy_names():
    return load_names(DATA / "names.tsv")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _kernels.use_backend(request.param):
        yield request.param


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
