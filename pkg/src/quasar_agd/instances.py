"""Test objectives: the zero-chain lower-bound family and diagonal quadratics.

The chain objective on R^T is

    fbar(x) = q(x) + sigma * sum_i upsilon(x_i),
    q(x)    = (x_1 - 1)^2 / 4 + sum_i (x_i - x_{i+1})^2 / 4,
    upsilon(theta) = 120 * int_1^theta t^2 (t - 1) / (1 + t^2) dt,

and the scaled instance is ``fhat(x) = L R^2 / T * fbar(x sqrt(T) / R)``.
All value/gradient helpers accept a single point or a batch (last axis = T).

Smoothness: the Hessian of ``q`` is ``(e_1 e_1^T + path Laplacian) / 2`` whose
norm approaches 2 as T grows (the alternating vector attains ~2), and
``|upsilon''| <= 180``. Hence ``fbar`` is ``(2 + 180 sigma)``-smooth, not
1-smooth, and ``fhat`` is ``(2 + 180 sigma) L``-smooth. The nominal ``L``
stays available as ``.L``; ``.problem()`` hands solvers the certified bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigurationError, DifferentiableOracle, QuasarProblem, as_vector


def upsilon(theta):
    """Closed form of the bump; exact antiderivative, arranged to avoid cancellation near 1."""
    theta = np.asarray(theta, dtype=np.float64)
    u = theta - 1.0
    # arctan(theta) - pi/4 on every branch, without cancellation near theta = 1
    atan_diff = np.arctan2(u, theta + 1.0)
    log_diff = np.log1p(u * (u + 2.0) / 2.0)  # log(1 + theta^2) - log 2
    out = 120.0 * (0.5 * u * u + atan_diff - 0.5 * log_diff)
    return out if out.ndim else float(out)


def upsilon_prime(theta):
    theta = np.asarray(theta, dtype=np.float64)
    out = 120.0 * theta * theta * (theta - 1.0) / (1.0 + theta * theta)
    return out if out.ndim else float(out)


def upsilon_second(theta):
    theta = np.asarray(theta, dtype=np.float64)
    t2 = theta * theta
    out = 120.0 * theta * (t2 * theta + 3.0 * theta - 2.0) / (1.0 + t2) ** 2
    return out if out.ndim else float(out)


def upsilon_quadrature(theta: float) -> float:
    """Adaptive-quadrature evaluation of the defining integral (reference only)."""
    from scipy.integrate import quad

    val, _ = quad(lambda t: t * t * (t - 1.0) / (1.0 + t * t), 1.0, float(theta),
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return 120.0 * val


def q_value_grad(x):
    x = np.asarray(x, dtype=np.float64)
    d0 = x[..., 0] - 1.0
    diffs = x[..., :-1] - x[..., 1:]
    value = 0.25 * d0 * d0 + 0.25 * np.sum(diffs * diffs, axis=-1)
    grad = np.zeros_like(x)
    grad[..., 0] = 0.5 * d0
    grad[..., :-1] += 0.5 * diffs
    grad[..., 1:] -= 0.5 * diffs
    return value, grad


def chain_value_grad(x, sigma: float):
    """Value and gradient of the unscaled chain objective."""
    x = np.asarray(x, dtype=np.float64)
    qv, qg = q_value_grad(x)
    value = qv + sigma * np.sum(upsilon(x), axis=-1)
    grad = qg + sigma * upsilon_prime(x)
    return value, grad


def chain_smoothness_bound(sigma: float) -> float:
    """Upper bound on the gradient Lipschitz constant of the chain objective."""
    # Gershgorin on the Hessian of q gives 2; the bump adds at most 180 sigma
    return 2.0 + 180.0 * sigma


def _as_float(v):
    return float(v) if np.ndim(v) == 0 else v


@dataclass(frozen=True)
class HardInstanceUnscaled:
    """Chain objective with parameters ``(T, sigma)``; minimizer ``1``, minimum 0.

    With ``checked=False`` any ``T >= 1`` and ``sigma > 0`` are accepted and the
    certified quasar-convexity parameter is withheld.
    """

    T: int
    sigma: float
    checked: bool = True

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"T must be a positive integer, got {self.T}")
        object.__setattr__(self, "T", int(self.T))
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")
        if self.checked:
            if self.sigma > 1e-6:
                raise ConfigurationError(f"sigma must lie in (0, 1e-6], got {self.sigma}")
            if self.T < self.sigma ** -0.5 * (1 - 1e-12):
                raise ConfigurationError(
                    f"T={self.T} is below sigma^(-1/2)={self.sigma ** -0.5:.6g}"
                )

    @property
    def kind(self) -> str:
        return "hard_unscaled"

    @property
    def certified_gamma(self) -> Optional[float]:
        if not self.checked:
            return None
        return 1.0 / (100.0 * self.T * math.sqrt(self.sigma))

    @property
    def gamma(self) -> float:
        return 1.0 / (100.0 * self.T * math.sqrt(self.sigma))

    @property
    def L(self) -> float:
        return 1.0

    @property
    def smoothness_bound(self) -> float:
        return chain_smoothness_bound(self.sigma)

    @property
    def dim(self) -> int:
        return self.T

    @property
    def x_star(self) -> np.ndarray:
        return np.ones(self.T)

    @property
    def f_star(self) -> float:
        return 0.0

    @property
    def R(self) -> float:
        return math.sqrt(self.T)  # distance from the origin

    def value_grad(self, x):
        v, g = chain_value_grad(x, self.sigma)
        return _as_float(v), g

    def oracle(self) -> DifferentiableOracle:
        sigma = self.sigma
        return DifferentiableOracle(
            lambda x: chain_value_grad(x, sigma),
            self.T,
            batch_fun=lambda X: chain_value_grad(X, sigma),
            name=f"hard_unscaled(T={self.T}, sigma={sigma:g})",
        )

    def problem(self, gamma: Optional[float] = None, L: Optional[float] = None) -> QuasarProblem:
        """Problem with the certified smoothness bound unless ``L`` is given."""
        return QuasarProblem(
            self.oracle(), L=L or self.smoothness_bound, gamma=min(1.0, gamma or self.gamma),
            mu=0.0, R=self.R, x_star=self.x_star, f_star=0.0,
        )

    def to_spec(self) -> dict:
        return {"kind": "hard_unscaled", "T": self.T, "sigma": self.sigma}


@dataclass(frozen=True)
class HardInstanceScaled:
    """Scaled chain objective for target accuracy ``epsilon``.

    ``T = ceil(1e-2 * sqrt(L) * R / (gamma * sqrt(epsilon)))`` and
    ``sigma = 1 / (1e4 T^2 gamma^2)``; minimizer ``(R / sqrt(T)) * 1``.
    """

    L: float
    R: float
    gamma: float
    epsilon: float
    checked: bool = True

    def __post_init__(self):
        for name in ("L", "R", "gamma", "epsilon"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be positive, got {val}")
        if self.gamma > 1:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.checked:
            if self.gamma > 1e-2:
                raise ConfigurationError(f"gamma must lie in (0, 1e-2], got {self.gamma}")
            if self.scale_ratio < 1e3 * (1 - 1e-12):
                raise ConfigurationError(
                    f"sqrt(L)*R/sqrt(eps) = {self.scale_ratio:.6g} must be >= 1e3"
                )

    @classmethod
    def unchecked(cls, L: float, R: float, gamma: float, epsilon: float) -> "HardInstanceScaled":
        return cls(L, R, gamma, epsilon, checked=False)

    @property
    def kind(self) -> str:
        return "hard_scaled"

    @property
    def scale_ratio(self) -> float:
        return math.sqrt(self.L) * self.R / math.sqrt(self.epsilon)

    @property
    def T(self) -> int:
        # round before ceil so that exact products like 1e-2 * 100 * 1e3 do not jump up by one
        raw = 1e-2 * self.scale_ratio / self.gamma
        return max(1, math.ceil(round(raw, 9)))

    @property
    def sigma(self) -> float:
        return 1.0 / (1e4 * self.T**2 * self.gamma**2)

    @property
    def certified_gamma(self) -> Optional[float]:
        return self.gamma if self.checked else None

    @property
    def smoothness_bound(self) -> float:
        return chain_smoothness_bound(self.sigma) * self.L

    @property
    def dim(self) -> int:
        return self.T

    @property
    def x_star(self) -> np.ndarray:
        return np.full(self.T, self.R / math.sqrt(self.T))

    @property
    def f_star(self) -> float:
        return 0.0

    @property
    def unscaled(self) -> HardInstanceUnscaled:
        return HardInstanceUnscaled(self.T, self.sigma, checked=self.checked)

    def value_grad(self, x):
        T, sigma = self.T, self.sigma
        s = math.sqrt(T) / self.R
        v, g = chain_value_grad(np.asarray(x, dtype=np.float64) * s, sigma)
        return _as_float(self.L * self.R**2 / T * v), (self.L * self.R / math.sqrt(T)) * g

    def oracle(self) -> DifferentiableOracle:
        T, sigma = self.T, self.sigma
        s = math.sqrt(T) / self.R
        fscale = self.L * self.R**2 / T
        gscale = self.L * self.R / math.sqrt(T)

        def fun(x):
            v, g = chain_value_grad(x * s, sigma)
            return fscale * v, gscale * g

        return DifferentiableOracle(
            fun, T, batch_fun=fun,
            name=f"hard_scaled(L={self.L:g}, R={self.R:g}, gamma={self.gamma:g}, eps={self.epsilon:g})",
        )

    def problem(self, L: Optional[float] = None) -> QuasarProblem:
        """Problem with the certified smoothness bound unless ``L`` is given."""
        return QuasarProblem(
            self.oracle(), L=L or self.smoothness_bound, gamma=self.gamma, mu=0.0, R=self.R,
            x_star=self.x_star, f_star=0.0,
        )

    def to_spec(self) -> dict:
        return {"kind": "hard_scaled", "L": self.L, "R": self.R, "gamma": self.gamma,
                "eps": self.epsilon}


def quadratic_value_grad(x, diag: np.ndarray, x_star: np.ndarray):
    d = np.asarray(x, dtype=np.float64) - x_star
    gd = diag * d
    return 0.5 * np.sum(d * gd, axis=-1), gd


def quadratic_oracle(spectrum, x_star) -> DifferentiableOracle:
    """``f(x) = (x - x*)^T D (x - x*) / 2`` with ``D = diag(spectrum)``."""
    diag = np.asarray(spectrum, dtype=np.float64)
    x_star = as_vector(x_star, diag.size)
    if np.any(diag <= 0):
        raise ConfigurationError("quadratic spectrum must be positive")

    def fun(x):
        return quadratic_value_grad(x, diag, x_star)

    return DifferentiableOracle(fun, diag.size, batch_fun=fun, name=f"quadratic(n={diag.size})")


@dataclass(frozen=True)
class QuadraticInstance:
    n: int
    mu: float
    L: float
    spectrum: str = "log"
    xstar_seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not (0 < self.mu <= self.L):
            raise ConfigurationError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")
        if self.spectrum not in ("log", "linear"):
            raise ConfigurationError(f"spectrum must be 'log' or 'linear', got {self.spectrum!r}")

    @property
    def kind(self) -> str:
        return "quadratic"

    @property
    def diag(self) -> np.ndarray:
        if self.n == 1:
            return np.array([self.L])
        if self.spectrum == "log":
            d = np.geomspace(self.mu, self.L, self.n)
        else:
            d = np.linspace(self.mu, self.L, self.n)
        d[0], d[-1] = self.mu, self.L
        return d

    @property
    def x_star(self) -> np.ndarray:
        return np.random.default_rng(self.xstar_seed).standard_normal(self.n)

    @property
    def f_star(self) -> float:
        return 0.0

    @property
    def dim(self) -> int:
        return self.n

    @property
    def gamma(self) -> float:
        return 1.0

    @property
    def certified_gamma(self) -> float:
        return 1.0

    @property
    def R(self) -> float:
        return float(np.linalg.norm(self.x_star))  # distance from the origin

    def oracle(self) -> DifferentiableOracle:
        return quadratic_oracle(self.diag, self.x_star)

    def problem(self, strong: bool = True) -> QuasarProblem:
        return QuasarProblem(
            self.oracle(), L=self.L, gamma=1.0, mu=self.mu if strong else 0.0,
            R=self.R, x_star=self.x_star, f_star=0.0,
        )

    def to_spec(self) -> dict:
        return {"kind": "quadratic", "n": self.n, "mu": self.mu, "L": self.L,
                "spectrum": self.spectrum, "xstar_seed": self.xstar_seed}


_FIELDS = {
    "hard_scaled": {"L": float, "R": float, "gamma": float, "eps": float},
    "hard_unscaled": {"T": int, "sigma": float},
    "quadratic": {"n": int, "mu": float, "L": float, "spectrum": str, "xstar_seed": int},
}
_OPTIONAL = {"quadratic": {"spectrum": "log", "xstar_seed": 0}}


def instance_from_spec(spec: dict):
    """Build an instance from its JSON form; errors name the offending field."""
    if not isinstance(spec, dict):
        raise ConfigurationError("instance spec must be a JSON object")
    kind = spec.get("kind")
    if kind not in _FIELDS:
        raise ConfigurationError(f"field 'kind': expected one of {sorted(_FIELDS)}, got {kind!r}")
    values = {}
    for name, typ in _FIELDS[kind].items():
        if name not in spec:
            if name in _OPTIONAL.get(kind, {}):
                values[name] = _OPTIONAL[kind][name]
                continue
            raise ConfigurationError(f"field '{name}' is required for kind {kind!r}")
        raw = spec[name]
        try:
            if typ is int:
                if isinstance(raw, bool) or float(raw) != int(float(raw)):
                    raise ValueError
                values[name] = int(float(raw))
            elif typ is float:
                if isinstance(raw, bool):
                    raise ValueError
                values[name] = float(raw)
            else:
                if not isinstance(raw, str):
                    raise ValueError
                values[name] = raw
        except (TypeError, ValueError):
            raise ConfigurationError(f"field '{name}': expected {typ.__name__}, got {raw!r}") from None
    unknown = set(spec) - set(_FIELDS[kind]) - {"kind"}
    if unknown:
        raise ConfigurationError(f"field '{sorted(unknown)[0]}' is not recognised for kind {kind!r}")
    if kind == "hard_scaled":
        return HardInstanceScaled(values["L"], values["R"], values["gamma"], values["eps"])
    if kind == "hard_unscaled":
        return HardInstanceUnscaled(values["T"], values["sigma"])
    return QuadraticInstance(**values)
