import os
from pathlib import Path

import numpy as np
import pytest

import ormachine as om
from ormachine import sampler


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timed tests measure runtime only."""
    x = om.ObservedMatrix.from_binary(np.eye(3, dtype=np.int8))
    cfg = om.SamplerConfig(burn_in=1, samples=1, seed=0)
    om.run(x, 2, cfg)
    sampler.chain_state_histogram(
        x, np.zeros((3, 2), dtype=np.int8), np.zeros((3, 2), dtype=np.int8), 1.0, 2
    )


def movielens_100k_path() -> Path | None:
    """Locate the MovieLens 100k ratings file (u.data), if present.

    Checked in order: $ORMACHINE_ML100K (file or directory), then
    tests/data/ml-100k/u.data. The dataset is an external input and is
    never bundled.
    """
    env = os.environ.get("ORMACHINE_ML100K")
    candidates = []
    if env:
        p = Path(env)
        candidates.append(p / "u.data" if p.is_dir() else p)
    candidates.append(Path(__file__).parent / "data" / "ml-100k" / "u.data")
    for c in candidates:
        if c.is_file():
            return c
    return None
