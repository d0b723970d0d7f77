"""Dense classifier network with hand-rolled backprop.

A small residual network trained with binary cross-entropy and Adam,
plateau learning-rate decay and early stopping.  Gradients are computed
analytically layer by layer and can be verified against central finite
differences.  Everything runs in float64 numpy, so fixed seeds give
bit-identical training trajectories.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Standardizer",
    "ClassifierNet",
    "TrainConfig",
    "TrainResult",
    "bce_logit_loss",
    "bce_logit_grad",
    "AdamState",
    "adam_step",
    "train_classifier",
    "finite_difference_check",
]

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


class Standardizer:
    """Online per-feature standardization (Welford running moments)."""

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.count = 0
        self.mean = np.zeros(n_features)
        self._m2 = np.zeros(n_features)

    def partial_fit(self, x: np.ndarray) -> "Standardizer":
        x = np.atleast_2d(np.asarray(x, float))
        for row in x:
            self.count += 1
            delta = row - self.mean
            self.mean = self.mean + delta / self.count
            self._m2 = self._m2 + delta * (row - self.mean)
        return self

    def fit(self, x: np.ndarray) -> "Standardizer":
        x = np.atleast_2d(np.asarray(x, float))
        self.count = x.shape[0]
        self.mean = x.mean(axis=0)
        self._m2 = ((x - self.mean) ** 2).sum(axis=0)
        return self

    @property
    def var(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.n_features)
        return self._m2 / self.count

    @property
    def scale(self) -> np.ndarray:
        # Constant features pass through unscaled.
        return np.where(self.var > 1e-24, np.sqrt(self.var), 1.0)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, float) - self.mean) / self.scale

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, float) * self.scale + self.mean

    def to_json(self):
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "m2": self._m2.tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "Standardizer":
        out = cls(len(data["mean"]))
        out.count = int(data["count"])
        out.mean = np.asarray(data["mean"], float)
        out._m2 = np.asarray(data["m2"], float)
        return out


class _Linear:
    def __init__(self, n_in, n_out, rng: np.random.Generator):
        # He initialization; biases start at zero.
        self.params = {
            "weight": rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)),
            "bias": np.zeros(n_out),
        }
        self.grads = {}
        self._x = None

    def forward(self, x, training):
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dout):
        self.grads["weight"] = self._x.T @ dout
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"].T


class _BatchNorm:
    def __init__(self, n_features):
        self.params = {"gamma": np.ones(n_features), "beta": np.zeros(n_features)}
        self.grads = {}
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self._cache = None
        self._calib = None  # (sum, sum_sq, count) accumulator while calibrating

    def forward(self, x, training):
        if self._calib is not None:
            # Calibration pass: normalize by batch moments (as in training)
            # while accumulating exact dataset moments.
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            s, sq, c = self._calib
            self._calib = (
                s + mu * x.shape[0],
                sq + (var + mu**2) * x.shape[0],
                c + x.shape[0],
            )
            inv_std = 1.0 / np.sqrt(var + _BN_EPS)
            xhat = (x - mu) * inv_std
            self._cache = (xhat, inv_std, False)
            return self.params["gamma"] * xhat + self.params["beta"]
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + _BN_EPS)
            xhat = (x - mu) * inv_std
            self.running_mean = (1 - _BN_MOMENTUM) * self.running_mean + _BN_MOMENTUM * mu
            self.running_var = (1 - _BN_MOMENTUM) * self.running_var + _BN_MOMENTUM * var
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + _BN_EPS)
            xhat = (x - self.running_mean) * inv_std
        self._cache = (xhat, inv_std, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std, training = self._cache
        self.grads["gamma"] = (dout * xhat).sum(axis=0)
        self.grads["beta"] = dout.sum(axis=0)
        dxhat = dout * self.params["gamma"]
        if not training:
            return dxhat * inv_std
        n = dout.shape[0]
        return (
            inv_std
            / n
            * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        )


class _ReLU:
    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._mask = None

    def forward(self, x, training):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class _ResidualBlock:
    """Pre-activation block: two (batchnorm -> relu -> linear) stages + skip."""

    def __init__(self, width, rng):
        self.stages = [
            _BatchNorm(width),
            _ReLU(),
            _Linear(width, width, rng),
            _BatchNorm(width),
            _ReLU(),
            _Linear(width, width, rng),
        ]

    def forward(self, x, training):
        h = x
        for stage in self.stages:
            h = stage.forward(h, training)
        return x + h

    def backward(self, dout):
        dh = dout
        for stage in reversed(self.stages):
            dh = stage.backward(dh)
        return dout + dh


class ClassifierNet:
    """Logit network f(x, theta_k): linear -> 2 residual blocks -> scalar head.

    The raw output is the logit of the classifier; equivalently the log
    likelihood-to-evidence ratio is read off the logit directly and never
    reconstructed through the sigmoid.
    """

    def __init__(self, n_in: int, hidden: int = 64, n_blocks: int = 2, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_in = n_in
        self.hidden = hidden
        self.n_blocks = n_blocks
        self.input_layer = _Linear(n_in, hidden, rng)
        self.blocks = [_ResidualBlock(hidden, rng) for _ in range(n_blocks)]
        self.head = _Linear(hidden, 1, rng)

    # -- plumbing ----------------------------------------------------------
    def _layers(self):
        yield "input", self.input_layer
        for i, block in enumerate(self.blocks):
            for j, stage in enumerate(block.stages):
                yield f"block{i}.stage{j}", stage
        yield "head", self.head

    def named_params(self):
        for lname, layer in self._layers():
            for pname, value in layer.params.items():
                yield f"{lname}.{pname}", layer, pname, value

    def param_dict(self):
        return {name: value for name, _, _, value in self.named_params()}

    def state(self):
        """Deep copy of all weights and batchnorm running statistics."""
        params = {name: value.copy() for name, _, _, value in self.named_params()}
        running = {}
        for lname, layer in self._layers():
            if isinstance(layer, _BatchNorm):
                running[lname] = (layer.running_mean.copy(), layer.running_var.copy())
        return {"params": params, "running": running}

    def load_state(self, state):
        for name, layer, pname, _ in list(self.named_params()):
            layer.params[pname] = state["params"][name].copy()
        for lname, layer in self._layers():
            if isinstance(layer, _BatchNorm):
                rm, rv = state["running"][lname]
                layer.running_mean = rm.copy()
                layer.running_var = rv.copy()

    # -- compute -----------------------------------------------------------
    def forward(self, z: np.ndarray, training: bool = False) -> np.ndarray:
        h = self.input_layer.forward(z, training)
        for block in self.blocks:
            h = block.forward(h, training)
        return self.head.forward(h, training)[:, 0]

    def backward(self, dlogit: np.ndarray) -> None:
        dh = self.head.backward(dlogit[:, None])
        for block in reversed(self.blocks):
            dh = block.backward(dh)
        self.input_layer.backward(dh)

    def grad_dict(self):
        out = {}
        for lname, layer in self._layers():
            for pname in layer.params:
                out[f"{lname}.{pname}"] = layer.grads[pname]
        return out

    def clear_caches(self) -> None:
        """Drop the per-layer activations cached for ``backward``.

        Every forward pass leaves each layer's last inputs behind; after a
        large grid evaluation that pins tens of MB per network for as long
        as the estimator lives.  Call this when no backward pass follows.
        """
        for _, layer in self._layers():
            for attr in ("_x", "_cache", "_mask"):
                if hasattr(layer, attr):
                    setattr(layer, attr, None)

    def recalibrate_batchnorm(self, z: np.ndarray, batch_size: int = 512) -> None:
        """Replace batchnorm running statistics with exact dataset moments.

        The momentum-averaged running statistics remember only the last few
        mini-batches, which makes inference-mode outputs noticeably noisy
        from epoch to epoch.  One pass over ``z`` (normalizing each batch by
        its own moments, exactly as during training) pins them to the full
        population instead.  ``z`` should be shuffled and mix both classes
        so batch moments match what the layers saw while training.
        """
        z = np.atleast_2d(np.asarray(z, float))
        bns = [layer for _, layer in self._layers() if isinstance(layer, _BatchNorm)]
        for b in bns:
            b._calib = (0.0, 0.0, 0)
        try:
            for start in range(0, z.shape[0], batch_size):
                self.forward(z[start : start + batch_size], training=False)
        finally:
            for b in bns:
                s, sq, c = b._calib
                b._calib = None
                if c:
                    mean = s / c
                    b.running_mean = mean
                    b.running_var = np.maximum(sq / c - mean**2, 0.0)


def bce_logit_loss(f, label):
    """Numerically stable binary cross-entropy on logits.

    Uses max(f, 0) - f*label + log(1 + exp(-|f|)); safe for any finite f.
    """
    f = np.asarray(f, float)
    label = np.asarray(label, float)
    return np.maximum(f, 0.0) - f * label + np.log1p(np.exp(-np.abs(f)))


def bce_logit_grad(f, label):
    """d loss / d logit = sigmoid(f) - label."""
    f = np.asarray(f, float)
    # Stable sigmoid via tanh.
    sig = 0.5 * (1.0 + np.tanh(0.5 * f))
    return sig - np.asarray(label, float)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 128
    max_epochs: int = 300
    early_stop_patience: int = 20
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    validation_fraction: float = 0.10
    weight_decay: float = 0.0
    hidden: int = 64
    n_blocks: int = 2

    def __post_init__(self):
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")


class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction.

    Aborts with the offending parameter name if a gradient is non-finite.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class TrainResult:
    net: ClassifierNet
    x_standardizer: Standardizer
    t_standardizer: Standardizer
    trace: list = field(default_factory=list)  # (epoch, train_loss, val_loss, lr)
    best_val_loss: float = math.inf
    best_epoch: int = -1
    stopped_reason: str = ""


_VAL_SHIFTS = (1, 3, 5, 7)


def _epoch_losses(net, zx, zt, batch_size):
    """Validation BCE in eval mode, 0-class averaged over fixed derangements.

    Several cyclic shifts keep the pairing-noise contribution to the loss
    small enough that epoch-to-epoch comparisons reflect the model.
    """
    n = zx.shape[0]
    shifts = tuple(s for s in _VAL_SHIFTS if s % n != 0) or (1,)
    loss1 = 0.0
    loss0 = 0.0
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        f1 = net.forward(np.hstack([zx[sl], zt[sl]]), training=False)
        loss1 += bce_logit_loss(f1, 1.0).sum()
    for shift in shifts:
        zt_shuffled = np.roll(zt, shift, axis=0)
        for start in range(0, n, batch_size):
            sl = slice(start, min(start + batch_size, n))
            f0 = net.forward(np.hstack([zx[sl], zt_shuffled[sl]]), training=False)
            loss0 += bce_logit_loss(f0, 0.0).sum()
    return (loss1 / n + loss0 / (len(shifts) * n)) / 2


def train_classifier(
    x: np.ndarray,
    theta: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    net: ClassifierNet | None = None,
) -> TrainResult:
    """Train a ratio classifier on jointly drawn (x, theta) pairs.

    The contrastive class (label 0) is built per mini-batch by pairing each
    x with the theta of a second, independently drawn mini-batch from the
    same dataset, which avoids extra simulator calls.  Returns the weights
    of the best validation epoch.
    """
    x = np.atleast_2d(np.asarray(x, float))
    theta = np.atleast_2d(np.asarray(theta, float))
    n = x.shape[0]
    min_n = int(math.ceil(2.0 / cfg.validation_fraction))
    if n < min_n:
        raise ValueError(
            f"need at least {min_n} samples for a "
            f"{cfg.validation_fraction:.0%} validation split, got {n}"
        )

    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    x_std = Standardizer(x.shape[1]).fit(x[train_idx])
    t_std = Standardizer(theta.shape[1]).fit(theta[train_idx])
    zx_train, zt_train = x_std.transform(x[train_idx]), t_std.transform(theta[train_idx])
    zx_val, zt_val = x_std.transform(x[val_idx]), t_std.transform(theta[val_idx])

    if net is None:
        net = ClassifierNet(
            x.shape[1] + theta.shape[1], hidden=cfg.hidden, n_blocks=cfg.n_blocks, rng=rng
        )
    params = net.param_dict()
    adam = AdamState()
    lr = cfg.learning_rate

    result = TrainResult(net, x_std, t_std)
    best_state = net.state()
    since_best = 0
    since_plateau = 0
    n_train = len(train_idx)
    # Fixed shuffled mix of joint and swapped pairs for batchnorm
    # recalibration after each epoch.
    z_calib = np.vstack(
        [
            np.hstack([zx_train, zt_train]),
            np.hstack([zx_train, np.roll(zt_train, 1, axis=0)]),
        ]
    )
    z_calib = z_calib[rng.permutation(z_calib.shape[0])]

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        partner = rng.permutation(n_train)
        train_loss = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            jdx = partner[start : start + cfg.batch_size]
            z = np.vstack(
                [
                    np.hstack([zx_train[idx], zt_train[idx]]),
                    np.hstack([zx_train[idx], zt_train[jdx]]),
                ]
            )
            labels = np.concatenate([np.ones(len(idx)), np.zeros(len(jdx))])
            f = net.forward(z, training=True)
            losses = bce_logit_loss(f, labels)
            train_loss += losses.sum()
            dlogit = bce_logit_grad(f, labels) / len(labels)
            net.backward(dlogit)
            adam_step(params, net.grad_dict(), adam, lr)
        train_loss /= 2 * n_train

        net.recalibrate_batchnorm(z_calib)
        val_loss = _epoch_losses(net, zx_val, zt_val, cfg.batch_size)
        result.trace.append((epoch, train_loss, val_loss, lr))
        if not math.isfinite(val_loss):
            raise RuntimeError(
                f"validation loss became non-finite at epoch {epoch}; trace={result.trace}"
            )

        if val_loss < result.best_val_loss - 1e-12:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = net.state()
            since_best = 0
            since_plateau = 0
        else:
            since_best += 1
            since_plateau += 1
            if since_plateau >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                since_plateau = 0
            if since_best >= cfg.early_stop_patience:
                result.stopped_reason = "early-stop"
                break
    else:
        result.stopped_reason = "max-epochs"

    net.load_state(best_state)
    net.clear_caches()
    return result


def finite_difference_check(
    net: ClassifierNet,
    z: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    tolerance: float = 1e-4,
    n_weights: int = 100,
    h: float = 1e-4,
):
    """Compare analytic gradients against central differences.

    Batchnorm runs in inference mode so the loss is a smooth deterministic
    function of the weights.  Returns (passed, failures, max_rel_err) where
    failures lists (param_name, flat_index, analytic, numeric, rel_err).
    """
    z = np.atleast_2d(np.asarray(z, float))
    labels = np.asarray(labels, float)

    def loss():
        f = net.forward(z, training=False)
        return bce_logit_loss(f, labels).mean()

    f = net.forward(z, training=False)
    net.backward(bce_logit_grad(f, labels) / len(labels))
    analytic = {k: v.copy() for k, v in net.grad_dict().items()}

    entries = []
    for name, layer, pname, value in net.named_params():
        for flat in range(value.size):
            entries.append((name, layer, pname, flat))
    chosen = [entries[i] for i in rng.choice(len(entries), size=min(n_weights, len(entries)), replace=False)]

    failures = []
    max_rel = 0.0
    for name, layer, pname, flat in chosen:
        p = layer.params[pname]
        orig = p.flat[flat]
        p.flat[flat] = orig + h
        lo_plus = loss()
        p.flat[flat] = orig - h
        lo_minus = loss()
        p.flat[flat] = orig
        g_fd = (lo_plus - lo_minus) / (2 * h)
        g_ad = analytic[name].flat[flat]
        rel = abs(g_ad - g_fd) / (abs(g_ad) + abs(g_fd) + 1e-8)
        max_rel = max(max_rel, rel)
        if rel >= tolerance:
            failures.append((name, flat, g_ad, g_fd, rel))
    return (not failures, failures, max_rel)
