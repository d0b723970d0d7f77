"""Append-only store of (round, theta, x) records.

Backed by a flat little-endian float64 record file plus a JSON sidecar
describing the record layout, so re-reading yields bit-identical floats.
A store created without a path lives purely in memory.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .prior import TruncationRegion

__all__ = ["SampleStore"]

_DTYPE = "<f8"


class SampleStore:
    def __init__(self, param_dim: int, data_dim: int, path=None):
        self.param_dim = param_dim
        self.data_dim = data_dim
        self.path = Path(path) if path is not None else None
        self._rounds = np.empty(0, dtype=np.int64)
        self._thetas = np.empty((0, param_dim))
        self._xs = np.empty((0, data_dim))
        if self.path is not None and not self.path.exists():
            self._write_sidecar()
            self.path.touch()

    # -- persistence -------------------------------------------------------
    @property
    def record_len(self) -> int:
        return 1 + self.param_dim + self.data_dim

    def _sidecar_path(self) -> Path:
        return self.path.with_suffix(self.path.suffix + ".json")

    def _write_sidecar(self):
        self._sidecar_path().write_text(
            json.dumps(
                {
                    "format": "f8le-records",
                    "fields": ["round", "theta", "x"],
                    "param_dim": self.param_dim,
                    "data_dim": self.data_dim,
                    "count": len(self),
                }
            )
        )

    @classmethod
    def open(cls, path) -> "SampleStore":
        path = Path(path)
        sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        store = cls.__new__(cls)
        store.param_dim = int(sidecar["param_dim"])
        store.data_dim = int(sidecar["data_dim"])
        store.path = path
        raw = np.frombuffer(path.read_bytes(), dtype=_DTYPE)
        rows = raw.reshape(-1, store.record_len) if raw.size else np.empty((0, store.record_len))
        store._rounds = rows[:, 0].astype(np.int64)
        store._thetas = rows[:, 1 : 1 + store.param_dim].copy()
        store._xs = rows[:, 1 + store.param_dim :].copy()
        return store

    # -- access ------------------------------------------------------------
    def __len__(self):
        return self._thetas.shape[0]

    @property
    def rounds(self) -> np.ndarray:
        return self._rounds

    @property
    def thetas(self) -> np.ndarray:
        return self._thetas

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    def append(self, round_index: int, thetas, xs) -> None:
        thetas = np.atleast_2d(np.asarray(thetas, float))
        xs = np.atleast_2d(np.asarray(xs, float))
        if thetas.shape[0] != xs.shape[0]:
            raise ValueError("theta and x batch sizes differ")
        if thetas.shape[0] == 0:
            return
        self._rounds = np.concatenate(
            [self._rounds, np.full(thetas.shape[0], round_index, dtype=np.int64)]
        )
        self._thetas = np.vstack([self._thetas, thetas])
        self._xs = np.vstack([self._xs, xs])
        if self.path is not None:
            rows = np.hstack([np.full((thetas.shape[0], 1), float(round_index)), thetas, xs])
            with self.path.open("ab") as fh:
                fh.write(np.ascontiguousarray(rows, dtype=_DTYPE).tobytes())
            self._write_sidecar()

    def in_region(self, region: TruncationRegion) -> np.ndarray:
        """Indices of records whose parameters lie inside the region."""
        if len(self) == 0:
            return np.empty(0, dtype=np.int64)
        return np.nonzero(region.contains(self._thetas))[0]

    def count_per_round(self) -> dict:
        values, counts = np.unique(self._rounds, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}
