"""Reference oracles and empirical checks of moment, contraction and convergence behaviour."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats as sps
from scipy.integrate import cumulative_simpson, simpson

from .coupling import coupled_samples
from .exceptions import DegenerateFit, NonFiniteState, NonIntegrable, NonPositiveValue, NotScalar
from .mlmc import LevelStats
from .parallel import map_chunks
from .stepping import _state_norm, simulate_paths
from .streams import counter_normals, stream_keys


@dataclass(frozen=True)
class QuadratureSpec:
    truncation_radius: float = 8.0
    points: int = 2**14
    rule: str = "simpson"

    def __post_init__(self):
        if self.points < 16 or self.points % 2:
            raise ValueError("points must be even and >= 16")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")
        if self.rule != "simpson":
            raise ValueError("only the composite Simpson rule is supported")


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    levels_used: tuple
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None


class WeakError(NamedTuple):
    level: int
    error: float
    std_error: float


def _linear_fit(x, y, used):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0.0:
        return FitResult(0.0, float(y[0]), 1.0, used, x, y)
    res = sps.linregress(x, y)
    return FitResult(float(res.slope), float(res.intercept), float(res.rvalue ** 2), used, x, y)


# quadrature ------------------------------------------------------------------


def _log_density(model, x):
    sigma = model.scalar_sigma
    if model.dim_state != 1 or sigma is None:
        raise NotScalar("the quadrature oracle needs a scalar model with constant diffusion")
    if sigma == 0.0:
        raise NonIntegrable("zero diffusion has no density")
    if model.drift_coefficients is not None:
        c = np.asarray(model.drift_coefficients, dtype=float)
        # exact antiderivative of the polynomial drift, vanishing at 0
        potential = np.polynomial.Polynomial(c).integ()(x)
    else:
        potential = cumulative_simpson(model.drift(x[:, None])[:, 0], x=x, initial=0.0)
    return 2.0 * potential / sigma**2


def invariant_expectation_1d(model, observable, spec=None):
    """E_pi[phi] for the stationary density proportional to exp(2 F(x) / sigma^2), F' = f."""
    spec = spec or QuadratureSpec()
    R = spec.truncation_radius
    x = np.linspace(-R, R, spec.points + 1)
    logd = _log_density(model, x)
    rho = np.exp(logd - logd.max())
    total = simpson(rho, x=x)
    left, right = x <= -0.9 * R, x >= 0.9 * R
    tail_mass = simpson(rho[left], x=x[left]) + simpson(rho[right], x=x[right])
    if not np.isfinite(total) or total <= 0 or tail_mass > 1e-10 * total:
        raise NonIntegrable(f"density does not decay within [-{R}, {R}]")
    phi = observable(x[:, None])
    return float(simpson(phi * rho, x=x) / total)


# Monte Carlo estimators ----------------------------------------------------------


def estimate_moment(model, policy, horizon, p, n_paths, seed, workers=1):
    """Monte Carlo mean and standard error of |X_T|^p."""
    if not p > 0:
        raise ValueError("p must be positive")
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    batch = simulate_paths(model, policy, horizon, n_paths, seed, workers=workers)
    vals = _state_norm(batch.terminal) ** p
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_paths))


def _pair_kernel(model, policy, targets, keys, x0, y0, offset):
    """Two paths on the union of their adaptive grids sharing every increment."""
    n = len(keys)
    d = model.dim_noise
    X = np.tile(x0, (n, 1))
    Y = np.tile(y0, (n, 1))
    t = np.zeros(n)
    counter = np.zeros(n, dtype=np.uint64)
    diffs = np.empty((len(targets), n))
    with np.errstate(over="ignore", invalid="ignore"):
        for j, target in enumerate(targets):
            while True:
                live = t < target
                if not live.any():
                    break
                rem = target - t
                hp = np.minimum(policy.h_delta(X), policy.h_delta(Y))
                hit = live & (hp >= rem)
                h = np.where(hit, rem, np.where(live, hp, 0.0))
                dW = np.sqrt(h)[:, None] * counter_normals(keys, counter, d)
                counter += np.uint64(1)
                X = X + model.drift(X) * h[:, None] + model.noise(X, dW)
                Y = Y + model.drift(Y) * h[:, None] + model.noise(Y, dW)
                t = np.where(hit, target, t + h)
                if not (np.isfinite(X).all() and np.isfinite(Y).all()):
                    raise NonFiniteState("contraction pair became non-finite")
            diffs[j] = _state_norm(X - Y)
    return diffs


def estimate_contraction(model, policy, x0, y0, horizons, n_paths, seed, workers=1):
    """Fit ln E|X_t - Y_t| against t for synchronously coupled paths from x0 and y0.

    This is the discrete surrogate of exact-solution contractivity: both paths
    take the smaller of their two proposed steps.
    """
    x0 = np.asarray(x0, dtype=float).reshape(model.dim_state)
    y0 = np.asarray(y0, dtype=float).reshape(model.dim_state)
    if np.array_equal(x0, y0):
        raise DegenerateFit("x0 == y0: all differences vanish")
    targets = np.unique(np.asarray(horizons, dtype=float))
    keys = stream_keys(seed, 0, np.arange(n_paths), "contraction")
    parts = map_chunks(lambda lo, hi: _pair_kernel(model, policy, targets, keys[lo:hi],
                                                   x0, y0, lo), n_paths, workers)
    diffs = np.concatenate(parts, axis=1)
    mean = diffs.mean(axis=1)
    if not (mean > 0).all():
        raise DegenerateFit("differences collapsed to zero")
    return _linear_fit(targets, np.log(mean), tuple(targets))


def fit_order(values, level_range=None, M=2):
    """Least-squares slope of log_M(value) against level.

    ``values`` is a sequence of ``(level, value)``; ``level_range`` is an
    inclusive ``(lo, hi)`` filter.
    """
    pts = [(int(lv), float(v)) for lv, v in values
           if level_range is None or level_range[0] <= lv <= level_range[1]]
    if len(pts) < 3:
        raise ValueError("need at least 3 points in range")
    lv = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts])
    if not (vals > 0).all():
        raise NonPositiveValue("fit_order needs strictly positive values")
    return _linear_fit(lv, np.log(vals) / np.log(M), (int(lv.min()), int(lv.max())))


def weak_error_curve(model, policy, observable, schedule, levels, n_paths, seed,
                     workers=1, oracle=None):
    """|MC mean of phi(X^l) - pi(phi)| per level, each level on its own horizon and scale."""
    if oracle is None:
        oracle = invariant_expectation_1d(model, observable)
    out = []
    for level in levels:
        pol = policy.at_level(level)
        batch = simulate_paths(model, pol, schedule.horizon(level), n_paths, seed, level=level,
                               workers=workers)
        vals = observable(batch.terminal)
        err = abs(float(vals.mean()) - oracle)
        out.append(WeakError(int(level), err, float(vals.std(ddof=1) / np.sqrt(n_paths))))
    return out


def level_statistics(model, policy, observable, schedule, levels, n_samples, seed, workers=1):
    """Per-level correction mean, variance and cost from fixed-size coupled batches."""
    out = []
    for level in levels:
        b = coupled_samples(model, policy, schedule, level, observable, n_samples, seed,
                            workers=workers)
        corr = b.correction
        out.append(LevelStats(level, schedule.horizon(level), len(b), float(corr.mean()),
                              float(corr.var(ddof=1)), float(b.cost.mean()),
                              float(b.fine.mean()), float(b.coarse.mean())))
    return out
