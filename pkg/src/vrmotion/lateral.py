"""Short-term lateral movement prediction from session traces.

Feature windows come in two variants: "baseline" uses only physical x/y
history, "virtual" additionally carries the virtual x/y coordinates, which
are available one time step ahead of the physical ones (the window ending
at index t holds virt(t+1) next to phys(t) in its last row).

Internally the model predicts the displacement from the last observed
physical position; the public contract is still an absolute position at the
horizon.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import stream_rng

MODEL_FORMAT_VERSION = 1
VARIANT_DIMS = {"baseline": 2, "virtual": 4}


@dataclass
class FeatureWindow:
    """One supervised sample: lookback features plus horizon target."""

    variant: str
    features: np.ndarray  # (L, D) with D = 2 (baseline) or 4 (virtual)
    target: np.ndarray  # (2,) physical position H steps past the window end
    user: int = 0
    end_index: int = 0
    horizon: int = 2
    during_reset: bool = False


@dataclass
class TrainConfig:
    hidden: int = 24
    layers: int = 1
    lr: float = 4e-3
    batch_size: int = 512
    max_epochs: int = 50
    patience: int = 10
    val_fraction: float = 0.2


@dataclass
class SeReport:
    """Squared-error evaluation (squared Euclidean distance, m^2)."""

    variant: str
    horizon_steps: int
    rate: float
    se: np.ndarray  # per-sample squared errors
    users: np.ndarray  # per-sample user ids
    mean: float = 0.0
    median: float = 0.0
    percentiles: dict = field(default_factory=dict)
    per_user_mean: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        self.se = np.asarray(self.se, dtype=float)
        self.users = np.asarray(self.users, dtype=int)
        self.mean = float(np.mean(self.se))
        self.median = float(np.median(self.se))
        self.percentiles = {
            str(p): float(np.percentile(self.se, p)) for p in (50, 90, 95, 99)
        }
        self.per_user_mean = {
            int(u): float(self.se[self.users == u].mean()) for u in np.unique(self.users)
        }

    @property
    def horizon_seconds(self):
        return self.horizon_steps / self.rate

    def to_dict(self):
        return {
            "variant": self.variant,
            "horizon_steps": self.horizon_steps,
            "horizon_seconds": self.horizon_seconds,
            "rate": self.rate,
            "n_samples": int(self.se.size),
            "mean_se_m2": self.mean,
            "median_se_m2": self.median,
            "percentiles_m2": self.percentiles,
            "per_user_mean_se_m2": {str(k): v for k, v in sorted(self.per_user_mean.items())},
            "scenario": self.scenario,
        }


def build_windows(trace, variant, lookback=20, horizon=2, user=None):
    """Slide over a SessionTrace and emit FeatureWindows for every valid end
    index of every user (or a single user when given).

    A window ending at index t uses phys[t-L+1 .. t]; the virtual variant
    pairs row k with virt[k+1] ("one time step ahead").  Windows overlapping
    a reset interval are flagged but kept.
    """
    if variant not in VARIANT_DIMS:
        raise ValueError(f"unknown variant {variant!r}")
    n = trace.n_ticks
    if n <= lookback + horizon:
        warnings.warn("trace too short for the requested lookback/horizon")
        return []
    users = range(trace.num_users) if user is None else [user]
    windows = []
    for u in users:
        phys = trace.phys[u]
        virt = trace.virt[u]
        reset = trace.reset[u]
        for t in range(lookback - 1, n - 1 - horizon + 1):
            lo = t - lookback + 1
            if variant == "baseline":
                feats = phys[lo:t + 1].copy()
            else:
                feats = np.concatenate([phys[lo:t + 1], virt[lo + 1:t + 2]], axis=1)
            windows.append(FeatureWindow(
                variant=variant,
                features=feats,
                target=phys[t + horizon].copy(),
                user=u,
                end_index=t,
                horizon=horizon,
                during_reset=bool(reset[lo:t + horizon + 1].any()),
            ))
    return windows


def select_training_windows(windows, reset_stride=2, walk_stride=6):
    """Thin a window list for training.

    Windows overlapping a reset are kept densely (they carry the hard
    stop/turn/resume transitions) while steady walking is strided; heavily
    overlapping walk windows are near-duplicates, so this balances the two
    regimes and bounds training cost without losing coverage.
    """
    resets = [w for w in windows if w.during_reset]
    walks = [w for w in windows if not w.during_reset]
    return resets[::reset_stride] + walks[::walk_stride]


# ---------------------------------------------------------------------------
# internal feature encoding

def _encode_features(feats_batch, variant):
    """(N, L, D_raw) absolute coordinates -> (N, L, D_enc) model inputs.

    Per step: the physical step into the row's tick, a moving indicator
    (resets freeze the walker, so stop/resume transitions carry most of the
    short-horizon error), and the absolute physical coordinates (room
    position determines steering forces and post-reset walk-off direction).
    The virtual variant appends the same step/indicator pair for the
    virtual track; because virtual rows run one tick ahead, its last row
    holds the step into the first future tick.
    """
    phys = feats_batch[:, :, :2]
    step = np.zeros_like(phys)
    step[:, 1:] = np.diff(phys, axis=1)
    moving = (np.hypot(step[:, :, 0], step[:, :, 1]) > 1e-9)[..., None] * 1.0
    cols = [step, moving, phys]
    if variant == "virtual":
        virt = feats_batch[:, :, 2:4]
        vstep = np.zeros_like(virt)
        vstep[:, 1:] = np.diff(virt, axis=1)
        vmoving = (np.hypot(vstep[:, :, 0], vstep[:, :, 1]) > 1e-9)[..., None] * 1.0
        cols += [vstep, vmoving]
    return np.concatenate(cols, axis=2)


def _encode_targets(targets, feats_batch):
    return targets - feats_batch[:, -1, :2]


@dataclass
class PredictorModel:
    variant: str
    lookback: int
    horizon: int
    rate: float
    net: nn.RecurrentNetwork
    feat_mean: np.ndarray
    feat_std: np.ndarray
    targ_mean: np.ndarray
    targ_std: np.ndarray

    def _prepare(self, feats_batch):
        enc = _encode_features(feats_batch, self.variant)
        return (enc - self.feat_mean) / self.feat_std

    def predict_batch(self, feats_batch):
        x = self._prepare(np.asarray(feats_batch, dtype=float))
        out = self.net.forward(x)
        delta = out * self.targ_std + self.targ_mean
        return feats_batch[:, -1, :2] + delta

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "variant": self.variant,
            "lookback": self.lookback,
            "horizon": self.horizon,
            "rate": self.rate,
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
            "targ_mean": self.targ_mean.tolist(),
            "targ_std": self.targ_std.tolist(),
            "net": self.net.to_dict(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported model format version")
        return cls(
            variant=d["variant"], lookback=d["lookback"], horizon=d["horizon"],
            rate=d["rate"], net=nn.RecurrentNetwork.from_dict(d["net"]),
            feat_mean=np.asarray(d["feat_mean"]), feat_std=np.asarray(d["feat_std"]),
            targ_mean=np.asarray(d["targ_mean"]), targ_std=np.asarray(d["targ_std"]),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class TrainingDiverged(RuntimeError):
    pass


def _stack(windows):
    feats = np.stack([w.features for w in windows]).astype(float)
    targs = np.stack([w.target for w in windows]).astype(float)
    users = np.array([w.user for w in windows], dtype=int)
    return feats, targs, users


def _contiguous_split(windows, val_fraction):
    """Per-user contiguous 80/20 split; overlapping windows never straddle
    the train/validation boundary in a way that leaks targets."""
    by_user = {}
    for w in windows:
        by_user.setdefault(w.user, []).append(w)
    train, val = [], []
    for u in sorted(by_user):
        ws = by_user[u]
        cut = int(round(len(ws) * (1.0 - val_fraction)))
        train.extend(ws[:cut])
        val.extend(ws[cut:])
    return train, val


def train_predictor(windows, config=None, seed=0, rate=20.0, min_windows=500):
    """Adam-trained MSE regressor with early stopping on validation MSE.

    Deterministic under (windows, config, seed).  Raises TrainingDiverged on
    NaN loss.
    """
    if config is None:
        config = TrainConfig()
    if len(windows) < min_windows:
        raise ValueError(f"need at least {min_windows} windows, got {len(windows)}")
    variant = windows[0].variant
    lookback = windows[0].features.shape[0]
    horizon = windows[0].horizon

    train_ws, val_ws = _contiguous_split(windows, config.val_fraction)
    f_tr, t_tr, _ = _stack(train_ws)
    f_va, t_va, _ = _stack(val_ws)

    enc_tr = _encode_features(f_tr, variant)
    d_tr = _encode_targets(t_tr, f_tr)
    feat_mean = enc_tr.reshape(-1, enc_tr.shape[2]).mean(axis=0)
    feat_std = np.maximum(enc_tr.reshape(-1, enc_tr.shape[2]).std(axis=0), 1e-8)
    targ_mean = d_tr.mean(axis=0)
    targ_std = np.maximum(d_tr.std(axis=0), 1e-8)

    x_tr = (enc_tr - feat_mean) / feat_std
    y_tr = (d_tr - targ_mean) / targ_std
    x_va = (_encode_features(f_va, variant) - feat_mean) / feat_std
    y_va = (_encode_targets(t_va, f_va) - targ_mean) / targ_std

    init_rng = stream_rng(seed, "lateral-init", variant)
    net = nn.RecurrentNetwork.build(
        "lstm", x_tr.shape[2], config.hidden, config.layers, 2, init_rng,
        head_activation="linear", return_sequence=False,
    )
    opt = nn.Adam(net.parameters(), lr=config.lr)
    shuffle_rng = stream_rng(seed, "lateral-shuffle", variant)

    best_val = np.inf
    best_params = net.copy_params()
    best_epoch = 0
    n = x_tr.shape[0]
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            net.zero_grad()
            pred = net.forward(x_tr[idx])
            loss, dpred = nn.mse_loss(pred, y_tr[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} (lr={config.lr})")
            net.backward(dpred)
            opt.step(net.gradients())
        val_loss, _ = nn.mse_loss(net.forward(x_va), y_va)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_params = net.copy_params()
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break
    net.load_params(best_params)

    return PredictorModel(
        variant=variant, lookback=lookback, horizon=horizon, rate=rate,
        net=net, feat_mean=feat_mean, feat_std=feat_std,
        targ_mean=targ_mean, targ_std=targ_std,
    )


def predict(model, window):
    """Physical position estimate `horizon` steps past the window end."""
    if window.variant != model.variant:
        raise ValueError(
            f"variant mismatch: window {window.variant!r} vs model {model.variant!r}")
    if window.features.shape[0] != model.lookback:
        raise ValueError("lookback mismatch")
    return model.predict_batch(window.features[None])[0]


def eval_se(model, windows, scenario=None):
    """Per-sample squared errors (squared Euclidean distance) on held-out
    windows, aggregated per user and overall."""
    if not windows:
        raise ValueError("eval_se needs at least one window")
    feats, targs, users = _stack(windows)
    preds = model.predict_batch(feats)
    se = np.sum((preds - targs) ** 2, axis=1)
    return SeReport(
        variant=model.variant, horizon_steps=model.horizon, rate=model.rate,
        se=se, users=users, scenario=scenario or {},
    ), preds
