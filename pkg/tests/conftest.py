import os
from pathlib import Path

import numpy as np
import pytest

MNIST_DIR = Path(os.environ.get("ACTENSEMBLE_MNIST_DIR", "/root/data/mnist"))
ISOLET_PATH = os.environ.get("ACTENSEMBLE_ISOLET_PATH", "/root/data/isolet/isolet.data")


def mnist_available() -> bool:
    return all((MNIST_DIR / name).exists() for name in (
        "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"))


def isolet_available() -> bool:
    return all(Path(p.strip()).exists() for p in ISOLET_PATH.split(",") if p.strip())


needs_mnist = pytest.mark.skipif(not mnist_available(), reason=f"MNIST IDX files not found in {MNIST_DIR}")


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mnist_dir():
    if not mnist_available():
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR}")
    return MNIST_DIR


def blob_dataset(n: int, d: int = 8, classes: int = 3, seed: int = 0, split: str = "train"):
    """Gaussian blobs that a small net separates easily."""
    from actensemble.data import Dataset
    r = np.random.default_rng(seed)
    centres = np.random.default_rng(99).normal(scale=3.0, size=(classes, d))
    labels = r.integers(0, classes, size=n)
    feats = centres[labels] + r.normal(size=(n, d))
    return Dataset(feats, labels.astype(np.int64), classes, split)


@pytest.fixture
def blob_splits():
    from actensemble.train import Splits
    return Splits(blob_dataset(240, seed=1), blob_dataset(60, seed=2, split="val"),
                  blob_dataset(60, seed=3, split="test"))


def write_fake_mnist(root: Path, n_train: int = 120, n_test: int = 40, seed: int = 0) -> Path:
    """Tiny IDX files with the MNIST names; digit class is encoded as a bright row."""
    from actensemble.data import mnist_files, write_idx
    r = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    files = mnist_files(root)
    for part, n in (("train", n_train), ("test", n_test)):
        labels = r.integers(0, 10, size=n).astype(np.uint8)
        imgs = r.integers(0, 60, size=(n, 28, 28)).astype(np.uint8)
        for i, lab in enumerate(labels):
            imgs[i, 2 * lab + 4, 4:24] = 255
        write_idx(files[f"{part}_images"], imgs)
        write_idx(files[f"{part}_labels"], labels)
    return root


# lines recorded by test_acceptance.py, repeated at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
