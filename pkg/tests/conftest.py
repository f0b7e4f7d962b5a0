import os
from pathlib import Path

import pytest

from multivfl.dataio import IDX_FILES

MNIST_DIR = Path(os.environ.get("MULTIVFL_MNIST_DIR", "/root/data/mnist"))


def _has_split(directory: Path, split: str) -> bool:
    return all((directory / f).exists() or (directory / (f + ".gz")).exists() for f in IDX_FILES[split])


@pytest.fixture(scope="session")
def mnist_dir():
    if not (_has_split(MNIST_DIR, "train") and _has_split(MNIST_DIR, "test")):
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR} (set MULTIVFL_MNIST_DIR)")
    return MNIST_DIR
