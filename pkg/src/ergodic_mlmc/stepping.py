"""Adaptive timestep policies and the adaptive Euler-Maruyama integrator."""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import NonFiniteState, OutOfRange
from .model import DEFAULT_TOLERANCE, _finite, _grid_for, _norms, _report
from .parallel import map_chunks
from .streams import RngStream, counter_normals, stream_keys


def default_h_cubic(x):
    """max(1, |x|) / max(1, |x + x^3|), elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(1.0, np.abs(x)) / np.maximum(1.0, np.abs(x + x * x * x))
    return float(out) if out.ndim == 0 else out


def drift_scaled_h(model):
    """h(x) = max(1, |x|) / max(1, |f(x)|); reduces to :func:`default_h_cubic` for the cubic model."""

    def h(X):
        f = model.drift(X)
        if X.shape[1] == 1:
            return np.maximum(1.0, np.abs(X[:, 0])) / np.maximum(1.0, np.abs(f[:, 0]))
        return np.maximum(1.0, _norms(X)) / np.maximum(1.0, _norms(f))

    return h


def constant_h(value=1.0):
    value = float(value)
    return lambda X: np.full(len(X), value)


@dataclass(frozen=True)
class TimestepPolicy:
    """Base timestep function h with cap ``h_max``, refinement factor M and scale delta."""

    h_base: Callable[[np.ndarray], np.ndarray]
    h_max: float = 1.0
    refinement_factor: int = 2
    level_scale: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        if int(self.refinement_factor) != self.refinement_factor or self.refinement_factor < 2:
            raise ValueError("refinement_factor must be an integer >= 2")
        if not 0 < self.level_scale <= 1:
            raise ValueError("level_scale must lie in (0, 1]")

    def h_delta(self, X):
        """delta * min(h_max, h(x)) for a batch ``(n, m)``."""
        return self.level_scale * np.minimum(self.h_max, self.h_base(X))

    def scaled(self, delta):
        return replace(self, level_scale=float(delta))

    def at_level(self, level):
        return self.scaled(float(self.refinement_factor) ** (-int(level)))


def cubic_policy(h_max=1.0, refinement_factor=2, level_scale=1.0):
    return TimestepPolicy(default_h_cubic_batch, h_max, refinement_factor, level_scale, "cubic")


def default_h_cubic_batch(X):
    return default_h_cubic(X[:, 0])


def default_policy(model, h_max=1.0, refinement_factor=2, level_scale=1.0):
    """The drift-scaled policy; for the cubic model this is exactly the benchmark policy."""
    if model.name == "cubic":
        return cubic_policy(h_max, refinement_factor, level_scale)
    return TimestepPolicy(drift_scaled_h(model), h_max, refinement_factor, level_scale, "drift_scaled")


def uniform_policy(h=1.0, refinement_factor=2, level_scale=1.0):
    return TimestepPolicy(constant_h(h), h, refinement_factor, level_scale, "constant")


def h_delta(policy, x):
    """Scaled timestep at a single state ``x``."""
    X = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return float(policy.h_delta(X)[0])


def check_timestep_condition(model, policy, alpha, beta, grid=None, tol=DEFAULT_TOLERANCE):
    """Scan <x, f> + h(x)|f|^2 / 2 + alpha |x|^2 - beta <= 0 with the base function h."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    pts = _grid_for(model, grid)
    f = _finite(model.drift(pts), pts, "drift")
    h = _finite(policy.h_base(pts), pts, "timestep")
    margin = (np.einsum("ni,ni->n", pts, f) + 0.5 * h * np.einsum("ni,ni->n", f, f)
              + alpha * _norms(pts) ** 2 - beta)
    return _report(margin, pts, "timestep_condition", tol)


def check_lower_bound(policy, xi, zeta, q, grid=None, tol=DEFAULT_TOLERANCE, dim=1):
    """Scan h(x) (xi |x|^q + zeta) >= 1; the margin is ``1 - h(x)(xi |x|^q + zeta)``."""
    if not (xi > 0 and zeta > 0 and q > 0):
        raise ValueError("xi, zeta and q must be positive")
    from .model import GridSpec

    grid = grid if grid is not None else GridSpec(dim=dim)
    pts = grid.array()
    h = _finite(policy.h_base(pts), pts, "timestep")
    margin = 1.0 - h * (xi * _norms(pts) ** q + zeta)
    return _report(margin, pts, "timestep_lower_bound", tol)


# integrator ------------------------------------------------------------------


@dataclass(frozen=True)
class PathResult:
    terminal_state: np.ndarray
    steps_taken: int
    max_norm: float
    horizon: float


@dataclass
class PathBatch:
    """Vectorised outcome of ``n`` independent paths."""

    terminal: np.ndarray  # (n, m)
    steps: np.ndarray  # (n,)
    max_norm: np.ndarray  # (n,)
    finite: np.ndarray  # (n,) False where the path blew up
    horizon: float
    snapshots: Optional[np.ndarray] = None  # (len(record_times), n, m)
    record_times: Optional[np.ndarray] = None


@dataclass
class RecordedPath:
    """Grid, states and increments of one path, for the continuous interpolant."""

    model: object
    times: np.ndarray  # (N+1,)
    states: np.ndarray  # (N+1, m)
    steps: np.ndarray  # (N,)
    increments: np.ndarray  # (N, d)


def _state_norm(X):
    return np.abs(X[:, 0]) if X.shape[1] == 1 else np.linalg.norm(X, axis=1)


def _integrate(model, policy, targets, keys, X0, on_nonfinite="raise", level=0,
               index_offset=0, recorder=None):
    """Advance each row of ``X0`` through the increasing time ``targets``.

    Steps are clamped so every target is hit exactly; the last target is the
    horizon.
    """
    n, m = X0.shape
    d = model.dim_noise
    nt = len(targets)
    keep_snaps = nt > 1
    out_X = X0.copy()
    out_steps = np.zeros(n, dtype=np.int64)
    out_max = _state_norm(X0)
    out_ok = np.ones(n, dtype=bool)
    snaps = np.empty((nt, n, m)) if keep_snaps else None

    idx = np.arange(n)
    X = X0.copy()
    t = np.zeros(n)
    k = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    counter = np.zeros(n, dtype=np.uint64)
    maxn = out_max.copy()
    ok = np.ones(n, dtype=bool)

    with np.errstate(over="ignore", invalid="ignore"):
        while idx.size:
            live = k < nt
            target = targets[np.minimum(k, nt - 1)]
            rem = target - t
            hp = policy.h_delta(X)
            if np.any(live & (hp <= 0)):
                raise ValueError("timestep function returned a non-positive step")
            hit = live & (hp >= rem)
            h = np.where(hit, rem, np.where(live, hp, 0.0))
            z = counter_normals(keys[idx], counter, d)
            counter += np.uint64(1)
            dW = np.sqrt(h)[:, None] * z
            if recorder is not None:
                recorder.append((t[0], X[0].copy(), h[0], dW[0].copy()))
            X = X + model.drift(X) * h[:, None] + model.noise(X, dW)
            t = np.where(hit, target, t + h)
            steps += live
            nrm = _state_norm(X)
            maxn = np.maximum(maxn, nrm)

            bad = live & ~np.isfinite(nrm)
            if bad.any():
                first = int(idx[np.argmax(bad)]) + index_offset
                if on_nonfinite == "raise":
                    raise NonFiniteState(
                        f"state became non-finite (level {level}, sample {first})",
                        level=level, sample_index=first)
                ok &= ~bad
                k = np.where(bad, nt, k)
                hit &= ~bad

            if hit.any():
                if keep_snaps:
                    snaps[k[hit], idx[hit]] = X[hit]
                k = k + hit

            done = k >= nt
            n_done = int(done.sum())
            if n_done and (n_done == idx.size or n_done * 8 >= idx.size):
                di = idx[done]
                out_X[di] = X[done]
                out_steps[di] = steps[done]
                out_max[di] = maxn[done]
                out_ok[di] = ok[done]
                keep = ~done
                idx, X, t, k, steps, counter, maxn, ok = (
                    a[keep] for a in (idx, X, t, k, steps, counter, maxn, ok))
    return out_X, out_steps, out_max, out_ok, snaps


def simulate_paths(model, policy, horizon, n_paths, seed, *, level=0, start_index=0,
                   role="single", x0=None, record_times=None, on_nonfinite="raise",
                   workers=1):
    """Simulate ``n_paths`` independent adaptive EM paths on ``[0, horizon]``.

    Path ``i`` uses stream ``(seed, level, start_index + i, role)``.  ``x0`` may be
    a single state or one row per path.  ``record_times`` adds exact snapshots at
    the given times (the horizon is always the last one).
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    m = model.dim_state
    if x0 is None:
        X0 = np.tile(model.initial_state, (n_paths, 1))
    else:
        X0 = np.asarray(x0, dtype=float)
        X0 = np.tile(X0.reshape(1, m), (n_paths, 1)) if X0.size == m else X0.reshape(n_paths, m)
    if record_times is None:
        targets = np.array([float(horizon)])
    else:
        rt = np.unique(np.asarray(record_times, dtype=float))
        if rt.size and (rt[0] <= 0 or rt[-1] > horizon):
            raise ValueError("record_times must lie in (0, horizon]")
        targets = np.unique(np.append(rt, float(horizon)))
    keys = stream_keys(seed, level, np.arange(start_index, start_index + n_paths), role)

    def run(lo, hi):
        return _integrate(model, policy, targets, keys[lo:hi], X0[lo:hi], on_nonfinite,
                          level, start_index + lo)

    parts = map_chunks(run, n_paths, workers)
    if not parts:
        empty = np.empty((0, m))
        return PathBatch(empty, np.empty(0, np.int64), np.empty(0), np.empty(0, bool), horizon)
    cat = [np.concatenate([p[j] for p in parts], axis=0) for j in range(4)]
    snaps = None
    if record_times is not None:
        snaps = np.concatenate([p[4] for p in parts], axis=1)
    return PathBatch(*cat, horizon=float(horizon), snapshots=snaps,
                     record_times=targets if record_times is not None else None)


def simulate_path(model, policy, horizon, rng, record=False):
    """One path driven by ``rng`` (an :class:`RngStream`).

    With ``record=True`` returns ``(PathResult, RecordedPath)`` for use with
    :func:`interpolate`.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    keys = np.array([rng.key], dtype=np.uint64)
    rec = [] if record else None
    X, steps, maxn, _, _ = _integrate(model, policy, np.array([float(horizon)]), keys,
                                      model.initial_state[None, :].copy(), "raise",
                                      rng.level, rng.sample_index, recorder=rec)
    result = PathResult(X[0].copy(), int(steps[0]), float(maxn[0]), float(horizon))
    if not record:
        return result
    times = np.array([r[0] for r in rec] + [float(horizon)])
    states = np.array([r[1] for r in rec] + [X[0]])
    return result, RecordedPath(model, times, states, np.array([r[2] for r in rec]),
                                np.array([r[3] for r in rec]))


def interpolate(path, t, rng=None):
    """Continuous interpolant at time ``t`` with a Brownian-bridge increment.

    ``rng`` is a :class:`numpy.random.Generator` for the bridge draw.
    """
    times = path.times
    if not times[0] <= t <= times[-1]:
        raise OutOfRange(f"t={t} outside recorded span [{times[0]}, {times[-1]}]")
    n = int(np.searchsorted(times, t, side="right")) - 1
    n = min(n, len(path.steps) - 1)
    if t == times[n + 1]:
        return path.states[n + 1].copy()
    h = path.steps[n]
    s = t - times[n]
    if s == 0.0:
        return path.states[n].copy()
    rng = rng if rng is not None else np.random.default_rng()
    dW = path.increments[n]
    bridge = (s / h) * dW + np.sqrt(s * (h - s) / h) * rng.standard_normal(dW.shape)
    x = path.states[n][None, :]
    model = path.model
    return (x + model.drift(x) * s + model.noise(x, bridge[None, :]))[0]
