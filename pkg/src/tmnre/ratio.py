"""Marginal likelihood-to-evidence ratio estimation.

One independent classifier head per marginal index (a 1- or 2-dimensional
subset of parameter dimensions), all trained from the same underlying
(x, theta) pairs; each head only ever sees its own parameter columns.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import ClassifierNet, Standardizer, TrainConfig, train_classifier
from .prior import TruncationRegion

__all__ = [
    "MarginalIndex",
    "MarginalRatioEstimator",
    "marginal_set",
    "train_mnre",
    "log_ratio",
    "save_estimator",
    "load_estimator",
]


@dataclass(frozen=True)
class MarginalIndex:
    """Ordered subset of parameter dimensions identifying one ratio head."""

    dims: tuple

    def __init__(self, dims):
        dims = tuple(int(d) for d in dims)
        if len(dims) != len(set(dims)):
            raise ValueError(f"duplicate dimensions in marginal index {dims}")
        if tuple(sorted(dims)) != dims:
            raise ValueError(f"marginal index must be sorted ascending, got {dims}")
        object.__setattr__(self, "dims", dims)

    def __len__(self):
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def label(self) -> str:
        return "-".join(str(d) for d in self.dims)


def marginal_set(dims: int, which: str = "1d+2d"):
    """All 1-d and/or 2-d marginal indices for a D-dimensional parameter.

    "1d" gives D indices, "2d" gives D(D-1)/2, "1d+2d" their union.
    """
    if dims < 1:
        raise ValueError("dims must be >= 1")
    out = []
    if which in ("1d", "1d+2d"):
        out.extend(MarginalIndex((d,)) for d in range(dims))
    if which in ("2d", "1d+2d"):
        if dims < 2:
            raise ValueError("2-d marginals need dims >= 2")
        out.extend(MarginalIndex(pair) for pair in itertools.combinations(range(dims), 2))
    if which not in ("1d", "2d", "1d+2d"):
        raise ValueError(f"unknown marginal selection {which!r}")
    return out


@dataclass
class MarginalRatioEstimator:
    """A trained head: net + standardizers + the region it was trained on.

    The estimate is only locally amortized: evaluation at parameters outside
    the training-time region is flagged rather than trusted.
    """

    index: MarginalIndex
    net: ClassifierNet
    x_standardizer: Standardizer
    t_standardizer: Standardizer
    region: TruncationRegion
    round: int = 0
    train_info: dict = field(default_factory=dict)

    def log_ratio(self, x: np.ndarray, theta_sub: np.ndarray, return_flags: bool = False):
        return log_ratio(self, x, theta_sub, return_flags=return_flags)


def log_ratio(
    est: MarginalRatioEstimator,
    x: np.ndarray,
    theta_sub: np.ndarray,
    return_flags: bool = False,
):
    """Evaluate log r(x | theta_k) for one x and a batch of sub-vectors.

    The logit of the classifier is the log ratio directly.  Points outside
    the training region are evaluated anyway but reported via the
    out-of-domain flag array when requested.
    """
    x = np.asarray(x, float).ravel()
    theta_sub = np.asarray(theta_sub, float)
    single = theta_sub.ndim <= 1 and len(est.index) == theta_sub.size
    theta_sub = theta_sub.reshape(-1, len(est.index))
    zx = est.x_standardizer.transform(x[None, :])
    zt = est.t_standardizer.transform(theta_sub)
    z = np.hstack([np.repeat(zx, theta_sub.shape[0], axis=0), zt])
    # Evaluate in chunks: every layer caches its activations for backprop,
    # so one huge forward would hold ~15 copies of the batch in memory.
    chunk = 16384
    if z.shape[0] <= chunk:
        f = est.net.forward(z, training=False)
    else:
        f = np.concatenate(
            [
                est.net.forward(z[start : start + chunk], training=False)
                for start in range(0, z.shape[0], chunk)
            ]
        )
    # The last chunk's activations would otherwise stay pinned on the
    # layers for the lifetime of the estimator (no backward follows here).
    est.net.clear_caches()

    if return_flags:
        lo = np.array([est.region.intervals[d][0] for d in est.index.dims])
        hi = np.array([est.region.intervals[d][1] for d in est.index.dims])
        out_of_domain = ~np.all((theta_sub >= lo) & (theta_sub <= hi), axis=1)
        if single:
            return float(f[0]), bool(out_of_domain[0])
        return f, out_of_domain
    return float(f[0]) if single else f


def _row_hash(n: int) -> str:
    """Hash of the row index sequence shared by all heads of one round."""
    return hashlib.sha256(np.arange(n, dtype=np.int64).tobytes()).hexdigest()[:16]


def train_mnre(
    thetas: np.ndarray,
    xs: np.ndarray,
    region: TruncationRegion,
    indices,
    cfg: TrainConfig,
    rng: np.random.Generator,
    round_index: int = 0,
):
    """Train one independent ratio head per marginal index on shared data.

    Each head receives the identical (x, theta) rows and slices out its own
    parameter columns.  A training failure in one head does not abort the
    others; per-head status lands in ``train_info["status"]``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, float))
    xs = np.atleast_2d(np.asarray(xs, float))
    if thetas.shape[0] == 0:
        raise ValueError("cannot train on an empty sample store")
    if thetas.shape[0] != xs.shape[0]:
        raise ValueError("theta and x row counts differ")

    shared_hash = _row_hash(thetas.shape[0])
    estimators = []
    for index in indices:
        head_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        theta_k = thetas[:, list(index.dims)]
        info = {"rows_hash": shared_hash, "n_train_rows": int(thetas.shape[0])}
        try:
            result = train_classifier(xs, theta_k, cfg, head_rng)
        except (RuntimeError, FloatingPointError) as exc:
            info["status"] = f"failed: {exc}"
            estimators.append(
                MarginalRatioEstimator(
                    index, None, None, None, region, round_index, info
                )
            )
            continue
        info.update(
            status="ok",
            best_epoch=result.best_epoch,
            best_val_loss=result.best_val_loss,
            stopped=result.stopped_reason,
        )
        estimators.append(
            MarginalRatioEstimator(
                index,
                result.net,
                result.x_standardizer,
                result.t_standardizer,
                region,
                round_index,
                info,
            )
        )
    return estimators


# -- persistence: flat binary tensors + JSON header -------------------------

def save_estimator(est: MarginalRatioEstimator, path) -> None:
    """Write the head as ``<path>.bin`` (float64 tensors) + ``<path>.json``."""
    path = Path(path)
    state = est.net.state()
    tensors = []
    layout = []
    offset = 0
    for name in sorted(state["params"]):
        arr = np.ascontiguousarray(state["params"][name], dtype="<f8")
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        tensors.append(arr.ravel())
        offset += arr.size
    for lname in sorted(state["running"]):
        rm, rv = state["running"][lname]
        for tag, arr in (("running_mean", rm), ("running_var", rv)):
            arr = np.ascontiguousarray(arr, dtype="<f8")
            layout.append(
                {"name": f"{lname}.{tag}", "shape": list(arr.shape), "offset": offset}
            )
            tensors.append(arr.ravel())
            offset += arr.size
    header = {
        "index": list(est.index.dims),
        "round": est.round,
        "region": est.region.to_json(),
        "net": {"n_in": est.net.n_in, "hidden": est.net.hidden, "n_blocks": est.net.n_blocks},
        "x_standardizer": est.x_standardizer.to_json(),
        "t_standardizer": est.t_standardizer.to_json(),
        "train_info": est.train_info,
        "layout": layout,
    }
    path.with_suffix(".bin").write_bytes(np.concatenate(tensors).tobytes())
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))


def load_estimator(path) -> MarginalRatioEstimator:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    netspec = header["net"]
    net = ClassifierNet(netspec["n_in"], hidden=netspec["hidden"], n_blocks=netspec["n_blocks"])
    params = {}
    running = {}
    for entry in header["layout"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = flat[entry["offset"] : entry["offset"] + size].reshape(entry["shape"]).copy()
        name = entry["name"]
        if name.endswith(".running_mean") or name.endswith(".running_var"):
            lname, tag = name.rsplit(".", 1)
            running.setdefault(lname, {})[tag] = arr
        else:
            params[name] = arr
    state = {
        "params": params,
        "running": {k: (v["running_mean"], v["running_var"]) for k, v in running.items()},
    }
    net.load_state(state)
    return MarginalRatioEstimator(
        MarginalIndex(tuple(header["index"])),
        net,
        Standardizer.from_json(header["x_standardizer"]),
        Standardizer.from_json(header["t_standardizer"]),
        TruncationRegion.from_json(header["region"]),
        header["round"],
        header.get("train_info", {}),
    )
