"""Vector plumbing, counted first-order oracles and the problem/trace records."""

from __future__ import annotations

import copy
import math
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

ValueGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class ConfigurationError(ValueError):
    """Raised when a problem, instance or solver is configured inconsistently."""


class OracleError(ArithmeticError):
    """Raised when an oracle returns a non-finite value or gradient."""

    def __init__(self, message: str, x: Optional[np.ndarray] = None):
        super().__init__(message)
        self.x = x


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array, checking its length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"vector has length {arr.size}, oracle expects {dim}")
    # a finite sum proves every entry finite; only fall back on overflow or non-finite data
    if not math.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise ValueError("vector has non-finite entries")
    return arr


def _describe(x: np.ndarray) -> str:
    if x.size <= 6:
        return np.array2string(x, precision=6)
    return f"<vector n={x.size} norm={np.linalg.norm(x):.6g} head={x[:3]}>"


class DifferentiableOracle:
    """Black-box objective returning ``(f(x), grad f(x))`` with evaluation counters.

    ``fun`` must be deterministic. ``batch_fun``, when given, maps an ``(m, n)``
    array to ``(values[m], grads[m, n])`` and is charged ``m`` evaluations.
    """

    def __init__(
        self,
        fun: ValueGrad,
        dim: int,
        *,
        batch_fun: Optional[Callable] = None,
        name: str = "",
    ):
        if dim < 1:
            raise ValueError("oracle dimension must be >= 1")
        self.fun = fun
        self.dim = int(dim)
        self.batch_fun = batch_fun
        self.name = name
        self.fn_evals = 0
        self.grad_evals = 0

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}({self.name or 'anonymous'}, dim={self.dim}, "
            f"fn_evals={self.fn_evals}, grad_evals={self.grad_evals})"
        )

    @property
    def counts(self) -> tuple[int, int]:
        return self.fn_evals, self.grad_evals

    def reset_counters(self) -> None:
        self.fn_evals = 0
        self.grad_evals = 0

    def fresh(self) -> "DifferentiableOracle":
        """Shallow copy sharing the function but with zeroed counters."""
        clone = copy.copy(self)
        clone.reset_counters()
        return clone

    def _raw(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = self.fun(x)
        value = float(value)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.dim,):
            raise OracleError(
                f"gradient has shape {grad.shape}, expected ({self.dim},)", x
            )
        if not (math.isfinite(value) and (math.isfinite(grad.sum()) or np.isfinite(grad).all())):
            raise OracleError(f"non-finite oracle output at x = {_describe(x)}", x)
        return value, grad

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = as_vector(x, self.dim)
        self.fn_evals += 1
        self.grad_evals += 1
        return self._raw(x)

    def value(self, x: np.ndarray) -> float:
        """Function value only; charges the function counter alone."""
        x = as_vector(x, self.dim)
        self.fn_evals += 1
        return self._raw(x)[0]

    def batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate many points at once; each row costs one value and one gradient."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"batch must have shape (m, {self.dim})")
        m = X.shape[0]
        self.fn_evals += m
        self.grad_evals += m
        if self.batch_fun is None:
            vals = np.empty(m)
            grads = np.empty_like(X)
            for i in range(m):
                vals[i], grads[i] = self._raw(X[i])
            return vals, grads
        vals, grads = self.batch_fun(X)
        vals = np.asarray(vals, dtype=np.float64)
        grads = np.asarray(grads, dtype=np.float64)
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
            bad = int(np.flatnonzero(~np.isfinite(vals) | ~np.all(np.isfinite(grads), axis=1))[0])
            raise OracleError(f"non-finite oracle output at x = {_describe(X[bad])}", X[bad])
        return vals, grads


def counted_eval(oracle: DifferentiableOracle, x) -> tuple[float, np.ndarray]:
    """Evaluate value and gradient together, charging both counters once."""
    return oracle(x)


def finite_diff_gradient(oracle: DifferentiableOracle, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate using ``2n`` value-only queries."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    x = as_vector(x, oracle.dim)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (oracle.value(xp) - oracle.value(xm)) / (2.0 * h)
    return grad


@dataclass
class QuasarProblem:
    """An oracle together with its declared constants.

    ``x_star``/``f_star`` are instrumentation only; no solver needs them.
    """

    oracle: DifferentiableOracle
    L: float
    gamma: float
    mu: float = 0.0
    R: Optional[float] = None
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ConfigurationError(f"L must be positive, got {self.L}")
        if not (0 < self.gamma <= 1):
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ConfigurationError(f"mu must be non-negative, got {self.mu}")
        if self.mu > 0 and self.L < self.gamma * self.mu / (2 - self.gamma) * (1 - 1e-12):
            raise ConfigurationError(
                f"L={self.L} is below gamma*mu/(2-gamma)="
                f"{self.gamma * self.mu / (2 - self.gamma)}; no such function exists"
            )
        if self.R is not None and not self.R >= 0:
            raise ConfigurationError(f"R must be non-negative, got {self.R}")
        if self.x_star is not None:
            self.x_star = as_vector(self.x_star, self.oracle.dim)

    @property
    def dim(self) -> int:
        return self.oracle.dim

    @property
    def kappa(self) -> float:
        if self.mu <= 0:
            return float("inf")
        return self.L / self.mu

    @property
    def has_optimum(self) -> bool:
        return self.x_star is not None and self.f_star is not None

    def with_oracle(self, oracle: DifferentiableOracle) -> "QuasarProblem":
        return QuasarProblem(oracle, self.L, self.gamma, self.mu, self.R, self.x_star, self.f_star)

    def fresh(self) -> "QuasarProblem":
        """Copy with an independent, zeroed evaluation counter."""
        return self.with_oracle(self.oracle.fresh())


class TerminationReason(str, enum.Enum):
    ITERATION_BUDGET = "iteration-budget"
    TARGET_REACHED = "target-reached"
    GUARD_TRIPPED = "guard-tripped"


@dataclass
class IterateRecord:
    """Diagnostics for iterate ``k``.

    ``eps_k``/``r_k`` describe ``x^(k)``/``v^(k)``. ``f_gap`` is the gap of the
    caller's objective, which differs from ``eps_k`` only for proxy runs. The step fields (``y``,
    ``alpha_k``, ``eta_k``, ...) describe the step taken from iterate ``k`` and
    are ``None`` on the final record of a run. Counters are cumulative over the
    run at the moment the record was closed.
    """

    k: int
    fx: float
    eps_k: Optional[float] = None
    f_gap: Optional[float] = None
    r_k: Optional[float] = None
    potential: Optional[float] = None
    alpha_k: Optional[float] = None
    eta_k: Optional[float] = None
    linesearch_evals: Optional[int] = None
    linesearch_branch: Optional[str] = None
    grad_norm_at_y: Optional[float] = None
    cumulative_fn_evals: int = 0
    cumulative_grad_evals: int = 0
    x: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None


@dataclass
class SolverTrace:
    records: list[IterateRecord]
    final_point: np.ndarray
    termination_reason: TerminationReason
    iterations: int = 0
    final_fn_evals: int = 0
    final_grad_evals: int = 0
    target: Optional[float] = None
    # first iterate whose gap is <= target: (k, fn_evals, grad_evals) at that moment
    target_hit: Optional[tuple[int, int, int]] = None
    flags: list[str] = field(default_factory=list)
    bound_violations: list[int] = field(default_factory=list)
    quasar_violations: list[int] = field(default_factory=list)
    final_f_gap: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def final_record(self) -> Optional[IterateRecord]:
        return self.records[-1] if self.records else None

    @property
    def ok(self) -> bool:
        return self.termination_reason is not TerminationReason.GUARD_TRIPPED
