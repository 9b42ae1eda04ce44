"""Validation harness: bias-reduction mapping, R, RMSE*, and ANN baseline.

Objective scores are compared against MOS only after a monotone cubic
mapping fitted per system, which absorbs scale and gradient biases so
that neither system is penalized for calibration rather than ranking.
RMSE* is epsilon-insensitive: a prediction inside a condition's 95%
confidence interval contributes no error, and the mean square uses a
degrees-of-freedom correction for the four mapping parameters.

The baseline model is a small fully-connected network (one hidden sigmoid
layer) mapping the six distortion metrics plus the three cognitive effect
metrics straight to MOS, trained by full-batch gradient descent with
momentum at a fixed seed so runs are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    LengthMismatchError,
    NonFiniteLossError,
    ZeroVarianceError,
)
from .interaction import pearson

#: number of parameters of the bias-reduction mapping (cubic)
MAPPING_PARAMS = 4
#: derivative sample count used by the monotonicity constraint
_DERIV_SAMPLES = 101


@dataclass(frozen=True)
class MonotoneMapping:
    """Monotone cubic y = c0 + c1 u + c2 u^2 + c3 u^3 on normalized input."""

    coefs: np.ndarray  # ascending powers, length 4
    center: float
    scale: float
    collapsed: bool = False
    constrained: bool = False

    def evaluate(self, x):
        u = (np.asarray(x, dtype=np.float64) - self.center) / self.scale
        c = self.coefs
        return c[0] + u * (c[1] + u * (c[2] + u * c[3]))


def _derivative_design(u: np.ndarray) -> np.ndarray:
    return np.stack([np.zeros_like(u), np.ones_like(u), 2.0 * u, 3.0 * u**2], axis=1)


def fit_mapping(pred, mos) -> MonotoneMapping:
    """Least-squares cubic, constrained monotone non-decreasing.

    The constraint is derivative non-negativity at 101 points spanning the
    observed prediction range. When the unconstrained fit is already
    monotone it is returned directly; otherwise a constrained solve runs
    from a deterministic start. A fit whose output range collapses to
    (numerically) a constant is flagged so callers report R = 0 instead of
    an undefined correlation.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError("pred and mos must be equal-length 1-D arrays")
    if len(x) < MAPPING_PARAMS:
        raise InsufficientDataError(f"{len(x)} conditions, need >= {MAPPING_PARAMS}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("mapping inputs must be finite")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise DegenerateInputError("constant predictions cannot be mapped")
    center, scale = 0.5 * (hi + lo), 0.5 * (hi - lo)
    u = (x - center) / scale
    design = np.stack([np.ones_like(u), u, u**2, u**3], axis=1)
    grid = np.linspace(-1.0, 1.0, _DERIV_SAMPLES)
    deriv = _derivative_design(grid)

    coefs, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    constrained = False
    if float((deriv @ coefs).min()) < -1e-9:
        start = np.array([float(y.mean()), 0.0, 0.0, 0.0])

        def objective(c):
            r = design @ c - y
            return 0.5 * float(r @ r)

        def gradient(c):
            return design.T @ (design @ c - y)

        result = minimize(
            objective,
            start,
            jac=gradient,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": lambda c: deriv @ c, "jac": lambda c: deriv}],
            options={"maxiter": 500, "ftol": 1e-12},
        )
        coefs = result.x
        constrained = True

    mapped_range = float(np.ptp(design @ coefs))
    y_range = float(np.ptp(y)) or 1.0
    collapsed = mapped_range < 1e-9 * max(1.0, y_range)
    return MonotoneMapping(
        coefs=np.asarray(coefs, dtype=np.float64),
        center=center,
        scale=scale,
        collapsed=collapsed,
        constrained=constrained,
    )


def rmse_star(mapped_pred, mos, ci95) -> float:
    """Epsilon-insensitive RMSE with degrees-of-freedom correction.

    Per condition the error is max(0, |mapped - mos| - ci95): predictions
    inside the confidence interval are forgiven entirely. The mean square
    divides by N - 4, charging the four mapping parameters.
    """
    m = np.asarray(mapped_pred, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    ci = np.asarray(ci95, dtype=np.float64)
    if not (m.shape == y.shape == ci.shape) or m.ndim != 1:
        raise LengthMismatchError("mapped_pred, mos and ci95 must share one length")
    if np.any(ci < 0):
        raise ValueError("ci95 must be non-negative")
    n = len(m)
    if n <= MAPPING_PARAMS:
        raise InsufficientDataError(
            f"{n} conditions cannot support the {MAPPING_PARAMS}-parameter correction"
        )
    err = np.maximum(0.0, np.abs(m - y) - ci)
    return float(np.sqrt((err @ err) / (n - MAPPING_PARAMS)))


@dataclass(frozen=True)
class EvalReport:
    """Per-system validation result."""

    system: str
    r: float
    rmse_star: float
    n: int
    mapping: MonotoneMapping

    @property
    def collapsed(self) -> bool:
        return self.mapping.collapsed


def evaluate(system: str, pred, mos, ci95) -> EvalReport:
    """Fit the bias-reduction mapping, then compute R and RMSE*.

    Every system goes through this identical code path. A collapsed
    mapping (anti-correlated or degenerate predictions) reports R = 0.
    """
    mapping = fit_mapping(pred, mos)
    mapped = mapping.evaluate(pred)
    if mapping.collapsed:
        r = 0.0
    else:
        try:
            r = pearson(mapped, np.asarray(mos, dtype=np.float64))
        except ZeroVarianceError:
            r = 0.0
    return EvalReport(
        system=system,
        r=float(r),
        rmse_star=rmse_star(mapped, mos, ci95),
        n=len(mapped),
        mapping=mapping,
    )


# --- ANN baseline -----------------------------------------------------------


def _default_input_names() -> tuple[str, ...]:
    from .cognitive import CEM_NAMES
    from .perceptual import DM_NAMES

    return tuple(DM_NAMES) + tuple(CEM_NAMES)


@dataclass(frozen=True)
class AnnConfig:
    hidden_units: int = 5
    epochs: int = 5000
    learning_rate: float = 0.5
    momentum: float = 0.9
    seed: int = 1234

    #: minimum training rows
    min_rows: int = 30


@dataclass(frozen=True)
class AnnModel:
    """One-hidden-layer sigmoid network mapping features to MOS."""

    input_names: tuple[str, ...]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    x_min: np.ndarray
    x_max: np.ndarray
    train_log: dict = field(default_factory=dict)

    def predict(self, features) -> np.ndarray:
        """MOS-scale predictions; inputs scaled by the training min/max.

        Unseen inputs outside the training range are clipped to [0,1]
        after scaling (documented inference convention).
        """
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        span = np.where(self.x_max > self.x_min, self.x_max - self.x_min, 1.0)
        xs = np.clip((x - self.x_min) / span, 0.0, 1.0)
        hidden = _sigmoid(xs @ self.w1.T + self.b1)
        return 100.0 * _sigmoid(hidden @ self.w2 + self.b2)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _unpack(flat: np.ndarray, d: int, h: int):
    i = 0
    w1 = flat[i : i + h * d].reshape(h, d); i += h * d
    b1 = flat[i : i + h]; i += h
    w2 = flat[i : i + h]; i += h
    b2 = flat[i]
    return w1, b1, w2, b2


def loss_and_grad(flat: np.ndarray, xs: np.ndarray, target: np.ndarray, hidden: int):
    """Half mean squared error on [0,1]-scaled targets, plus its gradient.

    Exposed separately so the backpropagated gradient can be checked
    against central finite differences.
    """
    n, d = xs.shape
    w1, b1, w2, b2 = _unpack(flat, d, hidden)
    z1 = xs @ w1.T + b1
    a1 = _sigmoid(z1)
    z2 = a1 @ w2 + b2
    yhat = _sigmoid(z2)
    diff = yhat - target
    loss = 0.5 * float(diff @ diff) / n

    dz2 = diff * yhat * (1.0 - yhat) / n
    gw2 = a1.T @ dz2
    gb2 = float(dz2.sum())
    da1 = np.outer(dz2, w2)
    dz1 = da1 * a1 * (1.0 - a1)
    gw1 = dz1.T @ xs
    gb1 = dz1.sum(axis=0)
    grad = np.concatenate([gw1.ravel(), gb1, gw2, [gb2]])
    return loss, grad


def train_ann(features, mos, config: AnnConfig = AnnConfig(), input_names=None) -> AnnModel:
    """Train the baseline network; deterministic for a fixed seed."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise LengthMismatchError("features must be (rows, inputs) matching mos")
    if len(x) < config.min_rows:
        raise InsufficientDataError(f"{len(x)} rows, need >= {config.min_rows}")
    names = tuple(input_names) if input_names is not None else _default_input_names()
    if x.shape[1] != len(names):
        raise ValueError(f"expected {len(names)} feature columns, got {x.shape[1]}")

    x_min = x.min(axis=0)
    x_max = x.max(axis=0)
    span = np.where(x_max > x_min, x_max - x_min, 1.0)
    xs = (x - x_min) / span
    target = y / 100.0

    d, h = x.shape[1], config.hidden_units
    rng = np.random.default_rng(config.seed)
    flat = rng.uniform(-0.5, 0.5, size=h * d + h + h + 1)
    velocity = np.zeros_like(flat)
    losses = []
    for _ in range(config.epochs):
        loss, grad = loss_and_grad(flat, xs, target, h)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"training diverged (loss={loss!r})")
        velocity = config.momentum * velocity - config.learning_rate * grad
        flat = flat + velocity
        losses.append(loss)
    final_loss, _ = loss_and_grad(flat, xs, target, h)
    if not np.isfinite(final_loss):
        raise NonFiniteLossError("training produced non-finite parameters")

    w1, b1, w2, b2 = _unpack(flat, d, h)
    # training RMSE back on the MOS scale
    rmse = 100.0 * float(np.sqrt(2.0 * final_loss))
    return AnnModel(
        input_names=names,
        w1=w1.copy(),
        b1=b1.copy(),
        w2=w2.copy(),
        b2=float(b2),
        x_min=x_min,
        x_max=x_max,
        train_log={
            "final_loss": final_loss,
            "train_rmse_mos": rmse,
            "epochs": config.epochs,
            "first_loss": losses[0] if losses else float("nan"),
        },
    )
