"""Experiment configuration: flat ``key = value`` files plus command-line overrides."""

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .exceptions import ConfigError
from .model import RegularityConstants, model_by_name, observable_by_name, polynomial_model
from .stepping import TimestepPolicy, constant_h, default_policy

OUTPUT_ENV = "ERGODIC_MLMC_OUTPUT_DIR"


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in _floats(text))


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    model: str = "cubic"
    drift_coefficients: tuple = ()
    diffusion: float = 1.0
    x0: float = 0.0
    # policy
    policy: str = "drift_scaled"
    h_constant: float = 1.0
    h_max: float = 1.0
    refinement_factor: int = 2
    delta: float = 2.0**-4
    # observable and MLMC
    observable: str = "abs"
    epsilon: tuple = (2e-2, 1e-2, 5e-3, 2.5e-3)
    mode: str = "langevin"
    lambda_: float = 1.0
    error_split: tuple = (0.5, 0.25, 0.25)
    max_level: int = 20
    min_samples: int = 50
    mu_hat: float = 1.0
    bias_order: float = 1.0
    # assumption constants for `check`
    alpha: float = 0.5
    beta: float = 1.0
    p_star: float = 2.0
    xi: float = 1.0
    zeta: float = 1.0
    q: float = 2.0
    grid_radius: float = 10.0
    grid_points: int = 4001
    # experiment sizes
    horizon: float = 20.0
    paths: int = 10_000
    level: int = 4
    samples: int = 100_000
    levels_max: int = 7
    level_samples: int = 100_000
    weak_levels: tuple = (2, 3, 4, 5, 6)
    weak_paths: int = 0
    horizons: tuple = (5.0, 10.0, 20.0, 50.0, 100.0)
    contraction_x0: float = 2.0
    contraction_y0: float = -2.0
    contraction_horizons: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    moment_p: float = 2.0
    # run control
    seed: int = 1
    workers: int = 1
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, "results"))

    # building blocks ------------------------------------------------------

    def build_model(self):
        if self.model == "polynomial":
            if not self.drift_coefficients:
                raise ConfigError("model = polynomial needs drift_coefficients")
            consts = RegularityConstants(alpha=self.alpha, beta=self.beta, lambda_=self.lambda_,
                                         p_star=self.p_star)
            return polynomial_model(self.drift_coefficients, self.diffusion, self.x0, consts)
        try:
            model = model_by_name(self.model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return model.with_initial_state([self.x0]) if self.x0 else model

    def build_policy(self, model=None):
        model = model or self.build_model()
        if self.policy == "drift_scaled":
            return default_policy(model, self.h_max, self.refinement_factor)
        if self.policy == "constant":
            return TimestepPolicy(constant_h(self.h_constant), self.h_max,
                                  self.refinement_factor, 1.0, "constant")
        raise ConfigError(f"unknown policy {self.policy!r}")

    def build_observable(self):
        try:
            return observable_by_name(self.observable)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mlmc_config(self, epsilon):
        from .mlmc import MlmcConfig

        try:
            return MlmcConfig(epsilon=epsilon, refinement_factor=self.refinement_factor,
                              mode=self.mode, lambda_=self.lambda_, max_level=self.max_level,
                              min_samples_per_level=self.min_samples,
                              error_split=self.error_split, bias_order=self.bias_order,
                              mu_hat=self.mu_hat, workers=self.workers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_CONVERTERS = {
    "drift_coefficients": _floats, "epsilon": _floats, "error_split": _floats,
    "weak_levels": _ints, "horizons": _floats, "contraction_horizons": _floats,
}
_ALIASES = {"lambda": "lambda_", "eps": "epsilon", "split": "error_split", "phi": "observable",
            "out_dir": "output_dir"}
KEYS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key, value):
    if key in _CONVERTERS:
        return _CONVERTERS[key](value)
    kind = type(getattr(ExperimentConfig(), key))
    if kind is int:
        number = float(value)
        if not number.is_integer():
            raise ValueError("expected an integer")
        return int(number)
    return kind(value)


def canonical_key(key):
    key = key.strip().replace("-", "_")
    return _ALIASES.get(key, key)


def apply_overrides(config, values):
    """Return a copy of ``config`` with ``values`` (raw strings or typed) applied."""
    updates = {}
    for raw_key, value in values.items():
        key = canonical_key(raw_key)
        if key not in KEYS:
            raise ConfigError(f"unknown config key {raw_key!r}")
        try:
            updates[key] = _convert(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {raw_key!r}: {value!r} ({exc})") from None
    return replace(config, **updates)


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return apply_overrides(ExperimentConfig(), values)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)
