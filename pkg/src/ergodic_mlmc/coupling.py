"""Coupled fine/coarse samples on shifted horizons.

The level-``l`` fine path runs on ``[-T_l, 0]`` with scale ``M^-l`` and the
coarse path on ``[-T_{l-1}, 0]`` with scale ``M^-(l-1)``.  A single global
event loop draws one Gaussian increment per event interval and feeds it to
both pending increments; the coarse one is discarded up to ``-T_{l-1}`` so
the two paths share noise only on the overlap.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import NonFiniteState, ScheduleTooShort
from .parallel import map_chunks
from .streams import RngStream, counter_normals, stream_keys


@dataclass(frozen=True)
class LevelSchedule:
    horizons: tuple
    refinement_factor: int = 2
    lambda_: float = 1.0
    mode: str = "langevin"

    def __post_init__(self):
        hz = tuple(float(h) for h in self.horizons)
        if not hz or hz[0] <= 0 or any(b <= a for a, b in zip(hz, hz[1:])):
            raise ValueError("horizons must be positive and strictly increasing")
        object.__setattr__(self, "horizons", hz)

    @classmethod
    def build(cls, max_level, refinement_factor=2, lambda_=1.0, mode="langevin"):
        from .mlmc import t_schedule

        hz = tuple(t_schedule(level, refinement_factor, lambda_, mode)
                   for level in range(max_level + 1))
        return cls(hz, refinement_factor, lambda_, mode)

    def __len__(self):
        return len(self.horizons)

    def horizon(self, level):
        if level >= len(self.horizons):
            raise ScheduleTooShort(f"schedule has no level {level}")
        return self.horizons[level]


@dataclass(frozen=True)
class CoupledSample:
    fine_value: float
    coarse_value: float
    fine_steps: int
    coarse_steps: int
    level: int

    @property
    def correction(self):
        return self.fine_value - self.coarse_value


@dataclass
class CoupledBatch:
    """Vectorised coupled samples; coarse fields are zero on level 0."""

    level: int
    start_index: int
    fine: np.ndarray
    coarse: np.ndarray
    fine_steps: np.ndarray
    coarse_steps: np.ndarray
    diagnostics: Optional[dict] = None

    @property
    def correction(self):
        return self.fine - self.coarse

    @property
    def cost(self):
        return (self.fine_steps + self.coarse_steps).astype(float)

    def __len__(self):
        return len(self.fine)

    def sample(self, i):
        return CoupledSample(float(self.fine[i]), float(self.coarse[i]),
                             int(self.fine_steps[i]), int(self.coarse_steps[i]), self.level)


def _raise_nonfinite(bad, idx, level, offset, which):
    first = int(idx[np.argmax(bad)]) + offset
    raise NonFiniteState(f"{which} path became non-finite (level {level}, sample {first})",
                         level=level, sample_index=first)


def _coupled_kernel(model, policy, schedule, level, keys, offset, instrument=False):
    """Event loop over a batch of coupled samples; returns terminal states and step counts."""
    n = len(keys)
    m, d = model.dim_state, model.dim_noise
    M = schedule.refinement_factor
    fine_policy = policy.scaled(float(M) ** (-level))
    coarse_policy = policy.scaled(float(M) ** (-(level - 1)))
    t_fine0 = -schedule.horizon(level)
    t_coarse0 = -schedule.horizon(level - 1)

    out_f = np.empty((n, m))
    out_c = np.empty((n, m))
    out_nf = np.zeros(n, dtype=np.int64)
    out_nc = np.zeros(n, dtype=np.int64)
    diag = None
    if instrument:
        diag = {"pre_overlap_noise": np.zeros((n, d)), "final_t_fine": np.empty(n),
                "final_t_coarse": np.empty(n), "coarse_pending_after_reset": np.full((n, d), np.nan)}

    idx = np.arange(n)
    t = np.full(n, t_fine0)
    tc = np.full(n, t_coarse0)
    tf = np.full(n, t_fine0)
    hc = np.zeros(n)
    hf = np.zeros(n)
    dWc = np.zeros((n, d))
    dWf = np.zeros((n, d))
    Xc = np.tile(model.initial_state, (n, 1))
    Xf = Xc.copy()
    nc = np.zeros(n, dtype=np.int64)
    nf = np.zeros(n, dtype=np.int64)
    counter = np.zeros(n, dtype=np.uint64)

    with np.errstate(over="ignore", invalid="ignore"):
        while idx.size:
            live = t < 0
            t_old = t
            t = np.where(live, np.minimum(tc, tf), t)
            z = counter_normals(keys[idx], counter, d)
            counter += np.uint64(1)
            dW = np.sqrt(t - t_old)[:, None] * z
            dWc = dWc + dW
            reset = t == t_coarse0
            dWc[reset] = 0.0
            dWf = dWf + dW
            if instrument:
                pre = live & (t <= t_coarse0)
                diag["pre_overlap_noise"][idx[pre]] += dW[pre]
                diag["coarse_pending_after_reset"][idx[reset]] = dWc[reset]

            ev = np.flatnonzero(live & (t == tc))
            if ev.size:
                x = Xc[ev]
                x = x + model.drift(x) * hc[ev, None] + model.noise(x, dWc[ev])
                if not np.isfinite(x).all():
                    _raise_nonfinite(~np.isfinite(x).all(axis=1), idx[ev], level, offset, "coarse")
                Xc[ev] = x
                nc[ev] += hc[ev] > 0
                h_new = np.minimum(coarse_policy.h_delta(x), -tc[ev])
                hc[ev] = h_new
                tc[ev] = tc[ev] + h_new
                dWc[ev] = 0.0

            ev = np.flatnonzero(live & (t == tf))
            if ev.size:
                x = Xf[ev]
                x = x + model.drift(x) * hf[ev, None] + model.noise(x, dWf[ev])
                if not np.isfinite(x).all():
                    _raise_nonfinite(~np.isfinite(x).all(axis=1), idx[ev], level, offset, "fine")
                Xf[ev] = x
                nf[ev] += hf[ev] > 0
                h_new = np.minimum(fine_policy.h_delta(x), -tf[ev])
                hf[ev] = h_new
                tf[ev] = tf[ev] + h_new
                dWf[ev] = 0.0

            done = t >= 0
            n_done = int(done.sum())
            if n_done and (n_done == idx.size or n_done * 8 >= idx.size):
                di = idx[done]
                out_f[di] = Xf[done]
                out_c[di] = Xc[done]
                out_nf[di] = nf[done]
                out_nc[di] = nc[done]
                if instrument:
                    diag["final_t_fine"][di] = tf[done]
                    diag["final_t_coarse"][di] = tc[done]
                keep = ~done
                t, tc, tf, hc, hf, dWc, dWf, Xc, Xf, nc, nf, counter, idx = (
                    a[keep] for a in (t, tc, tf, hc, hf, dWc, dWf, Xc, Xf, nc, nf, counter, idx))
    return out_f, out_c, out_nf, out_nc, diag


def _single_kernel(model, policy, horizon, keys, offset, level):
    from .stepping import _integrate

    X0 = np.tile(model.initial_state, (len(keys), 1))
    X, steps, _, _, _ = _integrate(model, policy, np.array([horizon]), keys, X0, "raise",
                                   level, offset)
    return X, steps


def coupled_samples(model, policy, schedule, level, observable, n_samples, seed,
                    start_index=0, workers=1, instrument=False):
    """``n_samples`` coupled samples on ``level``; sample ``i`` uses stream
    ``(seed, level, start_index + i, "coupled")``.  Level 0 is a single path."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    schedule.horizon(level)
    keys = stream_keys(seed, level, np.arange(start_index, start_index + n_samples), "coupled")
    return _batch_from_keys(model, policy, schedule, level, observable, keys, start_index,
                            workers, instrument)


def _batch_from_keys(model, policy, schedule, level, observable, keys, start_index,
                     workers=1, instrument=False):
    n = len(keys)
    if level == 0:
        pol0 = policy.scaled(1.0)
        T0 = schedule.horizon(0)
        parts = map_chunks(lambda lo, hi: _single_kernel(model, pol0, T0, keys[lo:hi],
                                                         start_index + lo, 0), n, workers)
        if not parts:
            return _empty_batch(level, start_index)
        X = np.concatenate([p[0] for p in parts])
        steps = np.concatenate([p[1] for p in parts])
        return CoupledBatch(0, start_index, observable(X), np.zeros(n), steps,
                            np.zeros(n, dtype=np.int64))
    parts = map_chunks(lambda lo, hi: _coupled_kernel(model, policy, schedule, level,
                                                      keys[lo:hi], start_index + lo, instrument),
                       n, workers)
    if not parts:
        return _empty_batch(level, start_index)
    Xf = np.concatenate([p[0] for p in parts])
    Xc = np.concatenate([p[1] for p in parts])
    diag = None
    if instrument:
        diag = {k: np.concatenate([p[4][k] for p in parts]) for k in parts[0][4]}
        diag["fine_terminal"] = Xf
        diag["coarse_terminal"] = Xc
    return CoupledBatch(level, start_index, observable(Xf), observable(Xc),
                        np.concatenate([p[2] for p in parts]),
                        np.concatenate([p[3] for p in parts]), diag)


def _empty_batch(level, start_index):
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return CoupledBatch(level, start_index, z, z.copy(), zi, zi.copy())


def _single_from_stream(model, policy, schedule, level, observable, rng):
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng), level, 0, "coupled")
    keys = np.array([rng.key], dtype=np.uint64)
    return _batch_from_keys(model, policy, schedule, level, observable, keys,
                            rng.sample_index).sample(0)


def coupled_sample(model, policy, schedule, level, observable, rng):
    """One coupled sample on ``level >= 1`` driven by ``rng``."""
    if level < 1:
        raise ValueError("coupled_sample needs level >= 1; use level0_sample")
    schedule.horizon(level)
    return _single_from_stream(model, policy, schedule, level, observable, rng)


def level0_sample(model, policy, schedule, observable, rng):
    """Single path on ``[-T_0, 0]`` at scale 1; coarse fields are zero."""
    return _single_from_stream(model, policy, schedule, 0, observable, rng)

