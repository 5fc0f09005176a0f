"""Bezier-curve mode connectivity between two trained parameter vectors.

The curve is a Bernstein combination of k+1 control points whose two
endpoints stay frozen; training draws one t per minibatch, evaluates
the penalized loss at the curve point, and moves only the interior
bends with the Bernstein coefficient as the chain-rule factor.  The
``mc`` statistic compares the endpoint mean of the 0-1 training error
against the largest deviation along the curve: negative means a
barrier, near zero means well-connected, positive means the endpoints
themselves were never at a reasonable optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .errors import DimensionError, DivergenceError, ParameterError
from .model import Batch, ModelSpec, ParamVector, loss_grad, require_same_layout
from .rng import Rng
from .train import LinearDecay, epoch_batches, evaluate, schedule_lr

DEFAULT_T_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class BezierCurve:
    """k+1 control points sharing one layout; controls[0] and controls[-1] are frozen."""

    controls: list[ParamVector]

    def __post_init__(self):
        if len(self.controls) < 2:
            raise ParameterError("a curve needs at least two control points")
        for c in self.controls[1:]:
            require_same_layout(self.controls[0], c)

    @property
    def k(self) -> int:
        return len(self.controls) - 1


def bernstein(k: int, t: float) -> np.ndarray:
    """The k+1 Bernstein basis coefficients at t."""
    return np.array(
        [math.comb(k, j) * (1.0 - t) ** (k - j) * t**j for j in range(k + 1)]
    )


def curve_point(curve: BezierCurve, t: float) -> ParamVector:
    """Bernstein-weighted combination; endpoints are reproduced bit-exactly."""
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t={t} outside [0, 1]")
    if t == 0.0:
        return curve.controls[0].copy()
    if t == 1.0:
        return curve.controls[-1].copy()
    coeffs = bernstein(curve.k, t)
    values = np.zeros_like(curve.controls[0].values)
    for c, ctrl in zip(coeffs, curve.controls):
        values += c * ctrl.values
    return ParamVector(curve.controls[0].layout, values)


def init_curve(theta_a: ParamVector, theta_b: ParamVector, k: int = 2) -> BezierCurve:
    """Interior bends placed on the straight line between the endpoints."""
    require_same_layout(theta_a, theta_b)
    if k < 1:
        raise ParameterError("bend degree k must be >= 1")
    controls = [theta_a]
    for j in range(1, k):
        frac = j / k
        controls.append(
            ParamVector(theta_a.layout, theta_a.values + frac * (theta_b.values - theta_a.values))
        )
    controls.append(theta_b)
    return BezierCurve(controls)


@dataclass(frozen=True)
class CurveTrainConfig:
    epochs: int = 50
    lr: float = 0.01
    schedule: LinearDecay | None = LinearDecay(25, 45, 0.01)
    batch_size: int = 128
    k: int = 2
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.k < 1:
            raise ParameterError("bend degree k must be >= 1")
        if self.lr < 0:
            raise ParameterError("lr must be >= 0")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if 0.0 not in self.t_grid or 1.0 not in self.t_grid:
            raise ParameterError("t_grid must contain both endpoints 0 and 1")
        if any(not 0.0 <= t <= 1.0 for t in self.t_grid):
            raise ParameterError("t_grid values must lie in [0, 1]")


def train_curve(
    spec: ModelSpec,
    curve: BezierCurve,
    ds: Dataset,
    cfg: CurveTrainConfig,
    weight_decay: float = 0.0,
    data_weight: float = 1.0,
) -> BezierCurve:
    """Minimize the loss along the curve over the interior bends only.

    One fresh t ~ Uniform[0,1] per minibatch; the gradient at gamma(t)
    reaches bend j scaled by its Bernstein coefficient.  Endpoint
    objects are passed through untouched.
    """
    if ds.dim != spec.input_dim:
        raise DimensionError("dataset dimension does not match the model spec")
    k = curve.k
    interior = [c.copy() for c in curve.controls[1:-1]]
    trained = BezierCurve([curve.controls[0], *interior, curve.controls[-1]])
    if not interior:
        return trained
    rng = Rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr_t = schedule_lr(epoch, cfg.lr, cfg.schedule)
        with np.errstate(over="ignore", invalid="ignore"):
            for idx in epoch_batches(ds.n, cfg.batch_size, rng):
                t = rng.uniform()
                gamma = curve_point(trained, t)
                batch = Batch(ds.X[idx], ds.y[idx])
                loss_b, grad = loss_grad(spec, gamma, batch, weight_decay, data_weight)
                if not np.isfinite(loss_b):
                    raise DivergenceError(epoch)
                coeffs = bernstein(k, t)
                for j, bend in enumerate(interior, start=1):
                    bend.values -= lr_t * coeffs[j] * grad.values
    return trained


@dataclass
class CurveProfile:
    """Training error (percent) and cross-entropy sampled along the curve."""

    t_values: tuple[float, ...]
    err01: list[float]
    cross_entropy: list[float]

    def __post_init__(self):
        if 0.0 not in self.t_values or 1.0 not in self.t_values:
            raise ParameterError("profile must include both endpoints")
        if not (len(self.t_values) == len(self.err01) == len(self.cross_entropy)):
            raise ParameterError("profile arrays must share one length")

    def to_dict(self) -> dict:
        return {
            "t": list(self.t_values),
            "err01": list(self.err01),
            "cross_entropy": list(self.cross_entropy),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveProfile":
        return cls(tuple(d["t"]), list(d["err01"]), list(d["cross_entropy"]))


def curve_profile(
    spec: ModelSpec,
    curve: BezierCurve,
    ds: Dataset,
    t_grid: tuple[float, ...] = DEFAULT_T_GRID,
    weight_decay: float = 0.0,
) -> CurveProfile:
    errs = []
    ces = []
    for t in sorted(t_grid):
        res = evaluate(spec, curve_point(curve, t), ds, weight_decay)
        errs.append(res.err01)
        ces.append(res.loss)
    return CurveProfile(tuple(sorted(t_grid)), errs, ces)


def mode_connectivity(profile: CurveProfile, use: str = "err01") -> float:
    """Endpoint-mean minus the most deviating on-curve value.

    ``use='err01'`` scores the 0-1 error (range [-100, 100]); the
    cross-entropy variant is exposed as an explicitly flagged alternate.
    """
    if use == "err01":
        vals = profile.err01
    elif use == "cross_entropy":
        vals = profile.cross_entropy
    else:
        raise ParameterError("use must be 'err01' or 'cross_entropy'")
    t = profile.t_values
    v0 = vals[t.index(0.0)]
    v1 = vals[t.index(1.0)]
    base = 0.5 * (v0 + v1)
    deviations = [abs(base - v) for v in vals]
    t_star = int(np.argmax(deviations))  # ties resolve to the smallest t
    return base - vals[t_star]
