from __future__ import annotations

import json
import os
import platform
import sys
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from fractal_ae.__about__ import __version__

THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def environment() -> dict[str, Any]:
    """Library versions and BLAS thread settings that affect bit-level replay."""

    return {
        "fractal_ae": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "threads": {name: os.environ.get(name) for name in THREAD_ENV_VARS},
    }


def run_metadata(**sections: Any) -> dict[str, Any]:
    return {"argv": sys.argv[1:], "environment": environment(), **sections}


def write_metadata(path: str | Path, metadata: dict[str, Any]) -> None:
    Path(path).write_text(
        json.dumps(metadata, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def read_metadata(path: str | Path) -> dict[str, Any]:
    data: dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
    return data
