"""SDE problem definitions, built-in benchmark models and assumption validators.

All callables on :class:`SdeModel` are vectorised over a leading batch axis:
``drift(X)`` maps ``(n, m) -> (n, m)``, ``diffusion(X)`` maps
``(n, m) -> (n, m, d)`` and ``drift_jacobian(X)`` maps ``(n, m) -> (n, m, m)``.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .exceptions import MissingJacobian, NonFiniteEvaluation

DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RegularityConstants:
    """Declared constants of the dissipativity, contractivity and growth conditions."""

    alpha: float = 0.5
    beta: float = 1.0
    lambda_: float = 1.0
    p_star: float = 2.0
    eta: float = 1.0
    gamma: float = 0.0
    mu: float = 1.0
    q_growth: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_", "eta", "q_growth", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.gamma < 0 or self.mu < 0:
            raise ValueError("gamma and mu must be nonnegative")
        if self.p_star < 2:
            raise ValueError("p_star must be >= 2")


@dataclass(frozen=True)
class SdeModel:
    dim_state: int
    dim_noise: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    initial_state: np.ndarray
    constants: RegularityConstants = field(default_factory=RegularityConstants)
    drift_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_langevin: bool = False
    name: str = "custom"
    # Set when g is constant; enables the fast noise path and the quadrature oracle.
    diffusion_matrix: Optional[np.ndarray] = None
    # Scalar polynomial drift f(x) = sum_i c_i x^i, when known exactly.
    drift_coefficients: Optional[tuple] = None

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ValueError("dim_state and dim_noise must be >= 1")
        x0 = np.asarray(self.initial_state, dtype=float).reshape(self.dim_state)
        object.__setattr__(self, "initial_state", x0)
        if self.diffusion_matrix is not None:
            G = np.asarray(self.diffusion_matrix, dtype=float).reshape(
                self.dim_state, self.dim_noise
            )
            object.__setattr__(self, "diffusion_matrix", G)
        if self.is_langevin:
            if self.dim_state != self.dim_noise:
                raise ValueError("a Langevin model needs dim_state == dim_noise")
            G = self.diffusion_matrix
            if G is None:
                G = np.asarray(self.diffusion(x0[None, :]))[0]
            if not np.array_equal(G, np.eye(self.dim_state)):
                raise ValueError("a Langevin model needs identity diffusion")

    def noise(self, X, dW):
        """g(X) dW for a batch: ``(n, m), (n, d) -> (n, m)``."""
        if self.diffusion_matrix is not None:
            if self.dim_state == 1 and self.dim_noise == 1:
                return dW * self.diffusion_matrix[0, 0]
            return dW @ self.diffusion_matrix.T
        return np.einsum("nij,nj->ni", self.diffusion(X), dW)

    @property
    def scalar_sigma(self):
        """Constant diffusion value of a scalar model, or None."""
        if self.dim_state == 1 and self.dim_noise == 1 and self.diffusion_matrix is not None:
            return float(self.diffusion_matrix[0, 0])
        return None

    def with_initial_state(self, x0):
        return replace(self, initial_state=np.asarray(x0, dtype=float))


@dataclass(frozen=True)
class Observable:
    eval: Callable[[np.ndarray], np.ndarray]
    lipschitz_const: float = 1.0
    name: str = "custom"

    def __call__(self, X):
        return self.eval(np.atleast_2d(X))


@dataclass(frozen=True)
class CheckReport:
    satisfied: bool
    worst_point: np.ndarray
    worst_margin: float
    points_checked: int
    name: str = ""

    def summary(self):
        status = "PASS" if self.satisfied else "FAIL"
        point = np.array2string(np.asarray(self.worst_point), precision=6)
        return (f"{status} {self.name}: worst_margin={self.worst_margin:.6g} "
                f"at x={point} ({self.points_checked} points)")


@dataclass(frozen=True)
class GridSpec:
    """Scan points for validators.

    Tensor grid on ``[-radius, radius]^dim`` for ``dim <= 2``, a Halton sample of
    ``n_random`` points otherwise.  ``explicit`` overrides both.
    """

    radius: float = 10.0
    points: int = 2001
    dim: int = 1
    n_random: int = 100_000
    explicit: Optional[np.ndarray] = None

    @classmethod
    def from_points(cls, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(dim=pts.shape[1], explicit=pts)

    def array(self):
        if self.explicit is not None:
            pts = np.asarray(self.explicit, dtype=float)
        elif self.dim <= 2:
            axis = np.linspace(-self.radius, self.radius, self.points)
            mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
        else:
            sample = qmc.Halton(d=self.dim, scramble=False).random(self.n_random)
            pts = (2.0 * sample - 1.0) * self.radius
        if pts.size == 0:
            raise ValueError("grid is empty")
        return pts


def _grid_for(model, grid):
    grid = grid if grid is not None else GridSpec(dim=model.dim_state)
    if grid.explicit is None and grid.dim != model.dim_state:
        grid = replace(grid, dim=model.dim_state)
    pts = grid.array()
    if pts.shape[1] != model.dim_state:
        raise ValueError("grid dimension does not match the model")
    return pts


def _finite(values, pts, what):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values.reshape(len(pts), -1)).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteEvaluation(f"{what} is not finite at x={pts[i]}")
    return values


def _report(margin, pts, name, tol=DEFAULT_TOLERANCE):
    i = int(np.argmax(margin))  # first maximiser = lexicographically smallest for tensor grids
    worst = float(margin[i])
    return CheckReport(worst <= tol, pts[i].copy(), worst, len(pts), name)


def _norms(pts):
    return np.linalg.norm(pts, axis=1)


# built-in models -----------------------------------------------------------


def _cubic_drift(X):
    return -X - X * X * X


def _cubic_jacobian(X):
    return (-1.0 - 3.0 * X * X)[:, :, None]


def builtin_cubic_langevin():
    """Scalar Langevin SDE dX = (-X - X^3) dt + dW started at 0."""
    constants = RegularityConstants(alpha=0.5, beta=1.0, lambda_=1.0, p_star=2.0,
                                    eta=1.0, gamma=1.5, mu=1.0, q_growth=2.0, kappa=1.0)
    return SdeModel(
        dim_state=1, dim_noise=1, drift=_cubic_drift,
        diffusion=lambda X: np.ones((len(X), 1, 1)), initial_state=np.zeros(1),
        constants=constants, drift_jacobian=_cubic_jacobian, is_langevin=True,
        name="cubic", diffusion_matrix=np.ones((1, 1)),
        drift_coefficients=(0.0, -1.0, 0.0, -1.0),
    )


def builtin_ou():
    """Ornstein-Uhlenbeck reference model dX = -X dt + dW; invariant law N(0, 1/2)."""
    constants = RegularityConstants(alpha=0.5, beta=1.0, lambda_=1.0, p_star=2.0,
                                    eta=1.0, gamma=0.0, mu=1.0, q_growth=1.0, kappa=1.0)
    return SdeModel(
        dim_state=1, dim_noise=1, drift=lambda X: -X,
        diffusion=lambda X: np.ones((len(X), 1, 1)), initial_state=np.zeros(1),
        constants=constants, drift_jacobian=lambda X: -np.ones((len(X), 1, 1)),
        is_langevin=True, name="ou", diffusion_matrix=np.ones((1, 1)),
        drift_coefficients=(0.0, -1.0),
    )


def polynomial_model(coefficients, sigma=1.0, x0=0.0, constants=None, name="polynomial"):
    """Scalar model with f(x) = sum_i c_i x^i and constant diffusion ``sigma``."""
    coeffs = tuple(float(c) for c in coefficients) or (0.0,)
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    sigma = float(sigma)
    return SdeModel(
        dim_state=1, dim_noise=1,
        drift=lambda X: poly(X),
        diffusion=lambda X: np.full((len(X), 1, 1), sigma),
        initial_state=np.full(1, float(x0)),
        constants=constants or RegularityConstants(),
        drift_jacobian=lambda X: dpoly(X)[:, :, None],
        is_langevin=sigma == 1.0, name=name,
        diffusion_matrix=np.full((1, 1), sigma), drift_coefficients=coeffs,
    )


def model_by_name(name):
    try:
        return {"cubic": builtin_cubic_langevin, "ou": builtin_ou}[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected 'cubic' or 'ou'") from None


# observables ---------------------------------------------------------------


def abs_observable():
    return Observable(lambda X: np.linalg.norm(X, axis=1) if X.shape[1] > 1 else np.abs(X[:, 0]),
                      1.0, "abs")


def identity_observable():
    return Observable(lambda X: X[:, 0].copy(), 1.0, "identity")


def square_observable():
    # not globally Lipschitz: outside the proven theory, allowed for experiments
    return Observable(lambda X: np.einsum("ni,ni->n", X, X), math.inf, "x2")


def constant_observable(value=1.0):
    return Observable(lambda X: np.full(len(X), float(value)), 1.0, "constant")


def observable_by_name(name):
    try:
        return {"abs": abs_observable, "identity": identity_observable,
                "x2": square_observable}[name]()
    except KeyError:
        raise ValueError(f"unknown observable {name!r}") from None


# validators ----------------------------------------------------------------


def check_dissipativity(model, alpha, beta, grid=None, tol=DEFAULT_TOLERANCE):
    """Scan <x, f(x)> + alpha |x|^2 - beta <= 0 over the grid."""
    if not (alpha > 0 and beta >= 0):
        raise ValueError("alpha must be positive and beta nonnegative")
    pts = _grid_for(model, grid)
    f = _finite(model.drift(pts), pts, "drift")
    margin = np.einsum("ni,ni->n", pts, f) + alpha * _norms(pts) ** 2 - beta
    return _report(margin, pts, "dissipativity", tol)


def check_diffusion_bound(model, beta, grid=None, tol=DEFAULT_TOLERANCE):
    """Scan the global bound |g(x)|_F^2 <= beta."""
    pts = _grid_for(model, grid)
    g = _finite(model.diffusion(pts), pts, "diffusion")
    margin = np.einsum("nij,nij->n", g, g) - beta
    return _report(margin, pts, "diffusion_bound", tol)


def _require_jacobian(model):
    if model.drift_jacobian is None:
        raise MissingJacobian(f"model {model.name!r} has no drift_jacobian")


def _diffusion_gradient_sq(model, pts, step=1e-6):
    """Squared Frobenius norm of the diffusion derivative; central differences."""
    if model.diffusion_matrix is not None:
        return np.zeros(len(pts))
    total = np.zeros(len(pts))
    for k in range(model.dim_state):
        e = np.zeros(model.dim_state)
        e[k] = step
        dg = (model.diffusion(pts + e) - model.diffusion(pts - e)) / (2 * step)
        total += np.einsum("nij,nij->n", dg, dg)
    return total


def check_contractivity(model, lambda_, p_star=2.0, grid=None, tol=DEFAULT_TOLERANCE):
    """Scan lambda_max(sym grad f) + (p*-1)/2 |grad g|^2 + lambda <= 0.

    The largest eigenvalue of the symmetric Jacobian part equals the supremum of
    <e, grad f(x) e> over unit vectors e, so no direction sampling is needed.
    """
    _require_jacobian(model)
    pts = _grid_for(model, grid)
    J = _finite(model.drift_jacobian(pts), pts, "drift_jacobian")
    if model.dim_state == 1:
        top = J[:, 0, 0]
    else:
        top = np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, 1, 2)))[:, -1]
    margin = top + 0.5 * (p_star - 1.0) * _diffusion_gradient_sq(model, pts) + lambda_
    return _report(margin, pts, "contractivity", tol)


def check_enhanced_lipschitz(model, grid=None, gamma=0.0, mu=1.0, q=1.0, tol=DEFAULT_TOLERANCE):
    """Scan the polynomial growth bound |grad f(x)| <= 2 gamma |x|^q + mu (operator norm)."""
    _require_jacobian(model)
    pts = _grid_for(model, grid)
    J = _finite(model.drift_jacobian(pts), pts, "drift_jacobian")
    if model.dim_state == 1:
        opnorm = np.abs(J[:, 0, 0])
    else:
        opnorm = np.linalg.norm(J, ord=2, axis=(1, 2))
    margin = opnorm - 2.0 * gamma * _norms(pts) ** q - mu
    return _report(margin, pts, "enhanced_lipschitz", tol)
