"""Multilevel driver: horizon schedule, sample allocation and adaptive level selection."""

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import List

import numpy as np

from .coupling import LevelSchedule, coupled_samples
from .exceptions import DegenerateVariance, MaxLevelExceeded, NonFiniteState

logger = logging.getLogger(__name__)

MODES = ("general", "langevin")


def t_schedule(level, M=2, lambda_=1.0, mode="langevin"):
    """Level horizon: (l+1) log M / (2 lambda) in general, (l+1) log M / lambda for Langevin SDEs."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    if mode == "general":
        return (level + 1) * math.log(M) / (2.0 * lambda_)
    if mode == "langevin":
        return (level + 1) * math.log(M) / lambda_
    raise ValueError(f"mode must be one of {MODES}")


def theoretical_L(epsilon, M, constants):
    """Closed-form finest level from ``constants = (mu, kappa^2 C_2)``; for reporting only."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    mu, k2c2 = constants
    extra = math.log(6.0 * max(mu * mu, k2c2)) / math.log(M)
    # guard the floor against a last-ulp shortfall at exact integers
    return math.floor(2.0 * abs(math.log(epsilon)) / math.log(M) + extra + 1e-12) + 1


@dataclass(frozen=True)
class MlmcConfig:
    epsilon: float
    refinement_factor: int = 2
    mode: str = "langevin"
    lambda_: float = 1.0
    max_level: int = 20
    min_samples_per_level: int = 50
    error_split: tuple = (0.5, 0.25, 0.25)
    bias_order: float = 1.0
    mu_hat: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.refinement_factor < 2 or int(self.refinement_factor) != self.refinement_factor:
            raise ValueError("refinement_factor must be an integer >= 2")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        split = tuple(float(s) for s in self.error_split)
        if len(split) != 3 or min(split) <= 0 or abs(sum(split) - 1.0) > 1e-12:
            raise ValueError("error_split must be three positive shares summing to 1")
        object.__setattr__(self, "error_split", split)
        if self.min_samples_per_level < 2:
            raise ValueError("min_samples_per_level must be >= 2")

    @property
    def variance_decay(self):
        """log_M decay rate of V_l used to extrapolate unsampled levels."""
        return 2.0 if self.mode == "langevin" else 1.0


@dataclass(frozen=True)
class LevelStats:
    level: int
    horizon: float
    samples: int
    mean_correction: float
    var_correction: float
    mean_cost: float
    mean_fine: float = 0.0
    mean_coarse: float = 0.0


@dataclass
class MlmcResult:
    estimate: float
    levels: List[LevelStats]
    total_cost: float
    statistical_error: float
    bias_estimate: float
    epsilon: float = 0.0
    seed: int = 0

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "seed": self.seed,
            "estimate": self.estimate,
            "total_cost": self.total_cost,
            "statistical_error": self.statistical_error,
            "bias_estimate": self.bias_estimate,
            "levels": [asdict(s) for s in self.levels],
        }


def optimal_samples(level_stats, epsilon, variance_share):
    """N_l = ceil(sqrt(V_l / C_l) * sum_k sqrt(V_k C_k) / (share * eps^2)).

    Raises :class:`DegenerateVariance` when every V_l is zero.
    """
    V = np.array([s.var_correction for s in level_stats], dtype=float)
    C = np.array([s.mean_cost for s in level_stats], dtype=float)
    if not (np.isfinite(V).all() and np.isfinite(C).all()) or epsilon <= 0:
        raise ValueError("variances and costs must be finite and epsilon positive")
    if not V.any():
        raise DegenerateVariance("all level variances are zero")
    C = np.maximum(C, 1e-300)
    total = np.sqrt(V * C).sum()
    return [int(math.ceil(x)) for x in np.sqrt(V / C) * total / (variance_share * epsilon ** 2)]


class _LevelData:
    def __init__(self, level, horizon):
        self.level = level
        self.horizon = horizon
        self.batches = []

    @property
    def n(self):
        return sum(len(b) for b in self.batches)

    def arrays(self):
        fine = np.concatenate([b.fine for b in self.batches])
        coarse = np.concatenate([b.coarse for b in self.batches])
        cost = np.concatenate([b.cost for b in self.batches])
        return fine, coarse, cost

    def stats(self, fallback_var=None):
        fine, coarse, cost = self.arrays()
        corr = fine - coarse
        n = len(corr)
        var = float(np.var(corr, ddof=1)) if n >= 2 else fallback_var
        return LevelStats(self.level, self.horizon, n, float(np.mean(corr)), var,
                          float(np.mean(cost)), float(np.mean(fine)), float(np.mean(coarse)))


def run_mlmc(model, policy, observable, config, seed=0):
    """Adaptive multilevel estimate of the invariant-measure expectation of ``observable``."""
    M = config.refinement_factor
    policy = replace(policy, refinement_factor=M)
    vshare, bshare, tshare = config.error_split
    eps = config.epsilon
    r = config.bias_order
    schedule = LevelSchedule.build(config.max_level, M, config.lambda_, config.mode)
    n0 = config.min_samples_per_level

    data = []
    targets = []

    def add_level():
        level = len(data)
        if level > config.max_level:
            raise MaxLevelExceeded(f"no convergence up to level {config.max_level}")
        data.append(_LevelData(level, schedule.horizon(level)))
        targets.append(n0)

    def extend(ld, count):
        try:
            batch = coupled_samples(model, policy, schedule, ld.level, observable, count, seed,
                                    start_index=ld.n, workers=config.workers)
        except NonFiniteState as exc:
            raise NonFiniteState(f"{exc} during MLMC extension", level=exc.level,
                                 sample_index=exc.sample_index) from exc
        ld.batches.append(batch)

    def current_stats():
        out = []
        for ld in data:
            prev = out[-1].var_correction if out else None
            fallback = prev / M ** config.variance_decay if prev is not None else 0.0
            out.append(ld.stats(fallback))
        return out

    for _ in range(3):
        add_level()

    while True:
        for ld, target in zip(data, targets):
            if target > ld.n:
                extend(ld, target - ld.n)
        stats = current_stats()
        try:
            n_opt = optimal_samples(stats, eps, vshare)
        except DegenerateVariance:
            n_opt = [n0] * len(stats)
        new_targets = [max(t, no, n0) for t, no in zip(targets, n_opt)]
        if any(t > ld.n for t, ld in zip(new_targets, data)):
            targets[:] = new_targets
            continue

        L = len(data) - 1
        mean_L = abs(stats[L].mean_correction)
        mean_prev = abs(stats[L - 1].mean_correction) / M ** r
        bias = max(mean_L, mean_prev) / (M ** r - 1.0)
        truncation = config.mu_hat * math.exp(-config.lambda_ * schedule.horizon(L))
        logger.debug("L=%d bias proxy %.3g truncation bound %.3g", L, bias, truncation)
        if bias <= math.sqrt(bshare) * eps and truncation <= math.sqrt(tshare) * eps:
            break
        add_level()

    stats = current_stats()
    estimate = float(math.fsum(s.mean_correction for s in stats))
    staterr = math.sqrt(sum(s.var_correction / s.samples for s in stats))
    total_cost = float(sum(s.samples * s.mean_cost for s in stats))
    return MlmcResult(estimate, stats, total_cost, staterr, bias, eps, seed)
