"""Gaussian-process regression over a TrainingSet.

Kernel: ARD squared exponential, c(a, b) = signal_var * exp(-0.5 * sum((a-b)^2 / s^2)).
The noise variance sits on the diagonal of C and is part of the predictive
variance, so posteriors describe the noisy observable.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, eigh, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from .errors import NonPositiveDefinite, OptimizerDiverged
from .pattern_index import TrainingSet

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GpHyperparams:
    signal_var: float
    noise_var: float
    length_scales: tuple

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(s) for s in self.length_scales))
        entries = (self.signal_var, self.noise_var, *self.length_scales)
        if not self.length_scales or not all(math.isfinite(v) and v > 0 for v in entries):
            raise ValueError(f"hyperparameters must be positive and finite: {entries}")

    @classmethod
    def from_log(cls, theta: Sequence[float]) -> "GpHyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            signal_var=float(np.exp(theta[0])),
            noise_var=float(np.exp(theta[1])),
            length_scales=tuple(np.exp(theta[2:])),
        )

    @classmethod
    def isotropic(cls, dim: int, length_scale: float = 1.0, signal_var: float = 1.0, noise_var: float = 0.1):
        return cls(signal_var=signal_var, noise_var=noise_var, length_scales=(length_scale,) * dim)

    def to_log(self) -> np.ndarray:
        return np.log(np.array([self.signal_var, self.noise_var, *self.length_scales]))

    def to_dict(self) -> dict:
        return {
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "length_scales": list(self.length_scales),
        }


@dataclass(frozen=True)
class GpPosterior:
    mean: float
    variance: float
    log_likelihood: float
    jitter: float = 0.0


# multi-start initial length scales, in units of the length floor when one is set
DEFAULT_RESTART_SCALES = (1.0, 0.3, 3.0)
# signal and noise start equal so neither side of the signal/noise ridge is favoured
RESTART_VARIANCE = 1.0

POLISH_STEPS = 4
POLISH_MAX_STEP = 0.1
HESSIAN_STEP = 1e-5


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 200
    gtol: float = 1e-6
    ftol: float = 1e-10
    log_bounds: tuple = (-15.0, 15.0)
    restart_scales: tuple = DEFAULT_RESTART_SCALES
    warm_start: bool = False
    # length scales within [length_floor, length_ceiling] * (largest distance between training inputs)
    length_floor: Optional[float] = None
    length_ceiling: Optional[float] = None
    polish: bool = True

    def __post_init__(self):
        for name in ("length_floor", "length_ceiling"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive: {value}")
        if self.length_floor is not None and self.length_ceiling is not None and self.length_ceiling <= self.length_floor:
            raise ValueError(f"length_ceiling {self.length_ceiling} must exceed length_floor {self.length_floor}")

    def restarts(self, dim: int, unit: float = 1.0) -> list[GpHyperparams]:
        return [
            GpHyperparams.isotropic(dim, unit * scale, signal_var=RESTART_VARIANCE, noise_var=RESTART_VARIANCE)
            for scale in self.restart_scales
        ]

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "gtol": self.gtol,
            "ftol": self.ftol,
            "log_bounds": list(self.log_bounds),
            "restart_scales": list(self.restart_scales),
            "warm_start": self.warm_start,
            "length_floor": self.length_floor,
            "length_ceiling": self.length_ceiling,
            "polish": self.polish,
        }


def _check_dim(dim: int, hp: GpHyperparams):
    if dim != len(hp.length_scales):
        raise ValueError(f"pattern dimension {dim} does not match {len(hp.length_scales)} length scales")


def covariance(a, b, hp: GpHyperparams) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    _check_dim(len(a), hp)
    scaled = (a - b) / np.asarray(hp.length_scales)
    return float(hp.signal_var * np.exp(-0.5 * np.dot(scaled, scaled)))


def _sq_diffs(X: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (dim, k, k)."""
    diff = X[:, None, :] - X[None, :, :]
    return np.moveaxis(diff * diff, -1, 0)


def _gram(X: np.ndarray, hp: GpHyperparams):
    _check_dim(X.shape[1], hp)
    inv_sq = 1.0 / np.square(hp.length_scales)
    sq = _sq_diffs(X)
    K = hp.signal_var * np.exp(-0.5 * np.tensordot(inv_sq, sq, axes=1))
    return K, sq, inv_sq


def _cross(X: np.ndarray, x_star: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    scaled = (X - x_star) / np.asarray(hp.length_scales)
    return hp.signal_var * np.exp(-0.5 * np.sum(scaled * scaled, axis=1))


def _factor(K: np.ndarray, noise_var: float):
    """Cholesky of K + noise_var*I with escalating relative jitter."""
    C = K + noise_var * np.eye(len(K))
    scale = float(np.mean(np.diag(C)))
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            L = cholesky(C + jitter * scale * np.eye(len(C)), lower=True)
            return L, jitter * scale
        except LinAlgError:
            jitter *= 10.0
    raise NonPositiveDefinite(f"covariance matrix not positive definite after jitter {JITTER_MAX} x {scale:.3g}")


def _lml_from_factor(L: np.ndarray, y: np.ndarray):
    alpha = cho_solve((L, True), y)
    value = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * len(y) * LOG_2PI
    return value, alpha


def posterior(ts: TrainingSet, hp: GpHyperparams) -> GpPosterior:
    X, y = ts.X, ts.targets
    K, _, _ = _gram(X, hp)
    L, jitter = _factor(K, hp.noise_var)
    log_likelihood, alpha = _lml_from_factor(L, y)

    c = _cross(X, ts.query.values, hp)
    mean = float(c @ alpha)
    v = solve_triangular(L, c, lower=True)
    gamma = hp.signal_var + hp.noise_var
    variance = max(gamma - float(v @ v), 0.0)
    return GpPosterior(mean=mean, variance=variance, log_likelihood=log_likelihood, jitter=jitter)


def log_marginal_likelihood(ts: TrainingSet, hp: GpHyperparams):
    """Log marginal likelihood and its gradient in (log signal_var, log noise_var, log s_d)."""
    X, y = ts.X, ts.targets
    K, sq, inv_sq = _gram(X, hp)
    L, _ = _factor(K, hp.noise_var)
    value, alpha = _lml_from_factor(L, y)

    # 0.5 * tr((alpha alpha^T - C^-1) dC/dtheta)
    inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(len(y)))
    grad = np.empty(2 + len(inv_sq))
    grad[0] = 0.5 * np.sum(inner * K)
    grad[1] = 0.5 * hp.noise_var * np.trace(inner)
    grad[2:] = 0.5 * np.einsum("ij,dij->d", inner * K, sq) * inv_sq
    return value, grad


def _objective(theta: np.ndarray, ts: TrainingSet):
    try:
        value, grad = log_marginal_likelihood(ts, GpHyperparams.from_log(theta))
    except (NonPositiveDefinite, ValueError):
        return np.inf, np.zeros_like(theta)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return np.inf, np.zeros_like(theta)
    return -value, -grad


def input_spread(X: np.ndarray) -> float:
    """Largest pairwise Euclidean distance between training inputs (0 for fewer than two)."""
    distances = pdist(X)
    return float(distances.max()) if distances.size else 0.0


def _bounds(ts: TrainingSet, settings: OptimizerSettings):
    """Per-coordinate log bounds and the restart length unit."""
    lo, hi = settings.log_bounds
    bounds = np.tile([lo, hi], (2 + ts.X.shape[1], 1))
    unit = 1.0
    spread = input_spread(ts.X)
    if spread > 0 and settings.length_floor is not None:
        unit = settings.length_floor * spread
        bounds[2:, 0] = min(max(lo, math.log(unit)), hi)
    if spread > 0 and settings.length_ceiling is not None:
        bounds[2:, 1] = max(min(hi, math.log(settings.length_ceiling * spread)), bounds[2, 0])
    return bounds, unit


def fit_hyperparams(ts: TrainingSet, init: GpHyperparams, settings: OptimizerSettings = OptimizerSettings()) -> GpHyperparams:
    """Maximize the log marginal likelihood from `init` with L-BFGS-B in log space.

    Never returns a point with lower likelihood than `init` (once `init` is
    inside the bounds).
    """
    bounds, _ = _bounds(ts, settings)
    hp, _ = _fit_from(ts, init, settings, bounds)
    return hp


def _fit_from(ts: TrainingSet, init: GpHyperparams, settings: OptimizerSettings, bounds: np.ndarray):
    theta0 = np.clip(init.to_log(), bounds[:, 0], bounds[:, 1])
    start = init if np.array_equal(theta0, init.to_log()) else GpHyperparams.from_log(theta0)
    start_value, _ = log_marginal_likelihood(ts, start)
    result = minimize(
        _objective,
        theta0,
        args=(ts,),
        jac=True,
        method="L-BFGS-B",
        bounds=[tuple(b) for b in bounds],
        options={"maxiter": settings.max_iter, "gtol": settings.gtol, "ftol": settings.ftol},
    )
    if not np.isfinite(result.fun) or not np.all(np.isfinite(result.x)):
        raise OptimizerDiverged(f"optimizer ended at a non-finite likelihood: {result.message}")

    fitted_value = -float(result.fun)
    if fitted_value < start_value:
        return start, start_value
    return GpHyperparams.from_log(result.x), fitted_value


def _gradient(ts: TrainingSet, theta: np.ndarray) -> np.ndarray:
    return log_marginal_likelihood(ts, GpHyperparams.from_log(theta))[1]


def _newton_step(ts: TrainingSet, theta: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Damped Newton ascent step; coordinates pinned at a bound stay put."""
    grad = _gradient(ts, theta)
    pinned = ((theta <= bounds[:, 0]) & (grad < 0)) | ((theta >= bounds[:, 1]) & (grad > 0))
    free = np.flatnonzero(~pinned)
    step = np.zeros_like(theta)
    if free.size == 0:
        return step

    hessian = np.empty((free.size, free.size))
    for col, i in enumerate(free):
        offset = np.zeros_like(theta)
        offset[i] = HESSIAN_STEP
        diff = _gradient(ts, theta + offset) - _gradient(ts, theta - offset)
        hessian[:, col] = diff[free] / (2.0 * HESSIAN_STEP)

    curvature, vectors = eigh(-0.5 * (hessian + hessian.T))
    damping = 1e-6 * max(float(np.max(np.abs(curvature))), np.finfo(float).tiny)
    # non-concave directions get no step
    gain = np.maximum(curvature, 0.0) / (curvature**2 + damping**2)
    step[free] = vectors @ (gain * (vectors.T @ grad[free]))

    largest = float(np.max(np.abs(step)))
    if largest > POLISH_MAX_STEP:
        step *= POLISH_MAX_STEP / largest
    return step


def _polish(ts: TrainingSet, hp: GpHyperparams, value: float, bounds: np.ndarray):
    """Refine an optimizer endpoint so it no longer depends on where the line search stopped."""
    theta = hp.to_log()
    try:
        for _ in range(POLISH_STEPS):
            step = _newton_step(ts, theta, bounds)
            if float(np.max(np.abs(step))) <= 1e-12:
                break
            theta = np.clip(theta + step, bounds[:, 0], bounds[:, 1])
        polished = GpHyperparams.from_log(theta)
        polished_value, _ = log_marginal_likelihood(ts, polished)
    except (NonPositiveDefinite, ValueError):
        return hp, value
    if not math.isfinite(polished_value) or polished_value < value - 1e-9 * (1.0 + abs(value)):
        return hp, value
    return polished, polished_value


def fit_multistart(
    ts: TrainingSet,
    settings: OptimizerSettings = OptimizerSettings(),
    warm: Optional[GpHyperparams] = None,
):
    """Fit from the fixed restarts (plus `warm` when warm starts are on).

    Returns (hyperparams, log_likelihood); ties go to the lowest restart index.
    The winner is refined by a few damped Newton steps when `settings.polish`.
    """
    bounds, unit = _bounds(ts, settings)
    starts = settings.restarts(ts.X.shape[1], unit)
    if settings.warm_start and warm is not None:
        starts.append(warm)

    best = None
    failures = []
    for index, init in enumerate(starts):
        try:
            hp, value = _fit_from(ts, init, settings, bounds)
        except (NonPositiveDefinite, OptimizerDiverged) as exc:
            failures.append(exc)
            continue
        if best is None or value > best[1]:
            best = (hp, value, index)

    if best is None:
        raise failures[-1]

    hp, value = best[0], best[1]
    if settings.polish:
        hp, value = _polish(ts, hp, value, bounds)

    logger.debug(
        json.dumps(
            {
                "event": "HyperparamsFitted",
                "restart": best[2],
                "logLikelihood": value,
                "signalVar": hp.signal_var,
                "noiseVar": hp.noise_var,
            }
        )
    )
    return hp, value
