"""Model checkpoints as NumPy ``.npz`` archives.

See docs/checkpoint.md for the layout. Archives are written with fixed zip entry
timestamps so that identical models produce identical files.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Any,
)

import numpy as np

from fractal_ae._hfae import HierarchyParams
from fractal_ae._models import EncoderDecoder, Hyperparams, Method
from fractal_ae._types import CheckpointFormatError, FractalAEBaseException

if TYPE_CHECKING:
    from pathlib import Path

    from fractal_ae._numeric import FloatArray

FORMAT_VERSION = 1
KEYS = (
    "format_version",
    "method",
    "m",
    "d",
    "k",
    "hyperparams_json",
    "hierarchy_json",
    "w",
    "enc",
    "dec",
    "rng_json",
)
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class Checkpoint:
    method: Method
    hp: Hyperparams
    w: FloatArray
    ed: EncoderDecoder
    hierarchy: HierarchyParams | None = None
    rng: dict[str, Any] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.ed.n_features

    @property
    def d(self) -> int:
        return self.ed.latent_dim

    def arrays(self) -> dict[str, np.ndarray[Any, Any]]:
        hierarchy = None if self.hierarchy is None else self.hierarchy.to_dict()
        hyperparams = self.hp.to_dict()
        return {
            "format_version": np.asarray(FORMAT_VERSION, dtype=np.int64),
            "method": np.asarray(self.method.value),
            "m": np.asarray(self.m, dtype=np.int64),
            "d": np.asarray(self.d, dtype=np.int64),
            "k": np.asarray(self.hp.k, dtype=np.int64),
            "hyperparams_json": np.asarray(json.dumps(hyperparams, sort_keys=True)),
            "hierarchy_json": np.asarray(json.dumps(hierarchy, sort_keys=True)),
            "w": np.asarray(self.w, dtype=np.float64),
            "enc": np.asarray(self.ed.enc, dtype=np.float64),
            "dec": np.asarray(self.ed.dec, dtype=np.float64),
            "rng_json": np.asarray(json.dumps(self.rng, sort_keys=True)),
        }


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in ckpt.arrays().items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            with zf.open(info, "w", force_zip64=True) as f:
                np.lib.format.write_array(f, arr, allow_pickle=False)


def _scalar(data: Any, key: str) -> Any:
    return data[key][()]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointFormatError: the file is not a checkpoint, has an unknown
            format version, or its arrays disagree with its recorded sizes.
    """

    source = str(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        msg = f"not a checkpoint archive ({e})"
        raise CheckpointFormatError(source, msg) from e
    if not isinstance(data, np.lib.npyio.NpzFile):
        msg = "not a checkpoint archive (single array file)"
        raise CheckpointFormatError(source, msg)

    with data:
        missing = [k for k in KEYS if k not in data.files]
        if missing:
            msg = f"missing keys {missing}"
            raise CheckpointFormatError(source, msg)
        version = int(_scalar(data, "format_version"))
        if version != FORMAT_VERSION:
            msg = f"unsupported format version {version}, expected {FORMAT_VERSION}"
            raise CheckpointFormatError(source, msg)
        try:
            method = Method(str(_scalar(data, "method")))
            raw_hp = json.loads(str(_scalar(data, "hyperparams_json")))
            hp = Hyperparams.from_dict(raw_hp)
            raw_hierarchy = json.loads(str(_scalar(data, "hierarchy_json")))
            hierarchy = (
                None
                if raw_hierarchy is None
                else HierarchyParams.from_dict(raw_hierarchy)
            )
            rng = json.loads(str(_scalar(data, "rng_json")))
            w = np.array(data["w"], dtype=np.float64)
            ed = EncoderDecoder(
                np.array(data["enc"], dtype=np.float64),
                np.array(data["dec"], dtype=np.float64),
            )
        except (ValueError, KeyError, TypeError, FractalAEBaseException) as e:
            msg = f"corrupt checkpoint contents ({e})"
            raise CheckpointFormatError(source, msg) from e
        m, d, k = (int(_scalar(data, key)) for key in ("m", "d", "k"))

    if w.shape != (m,) or ed.enc.shape != (m, d) or ed.dec.shape != (d, m):
        msg = (
            f"array shapes w{w.shape} enc{ed.enc.shape} dec{ed.dec.shape} "
            f"disagree with m={m} d={d}"
        )
        raise CheckpointFormatError(source, msg)
    if k != hp.k:
        msg = f"recorded k={k} disagrees with hyperparameters k={hp.k}"
        raise CheckpointFormatError(source, msg)
    return Checkpoint(method, hp, w, ed, hierarchy, rng)
