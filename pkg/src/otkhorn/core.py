"""Domain types and entropic-dual machinery shared by every solver.

All kernel quantities are handled through the log-plan
``L_ij = u_i + v_j - C_ij / eta`` so that tiny regularization (large
``C / eta``) never overflows; marginals come out of a log-sum-exp.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-12
FEASIBLE_TOL = 1e-12


class ArgumentError(ValueError):
    """Inputs of the wrong shape or outside an operation's domain."""


class ConfigurationError(ValueError):
    """A solver configuration that cannot be run safely."""


def _as_array(x) -> np.ndarray:
    for attr in ("weights", "entries"):
        if hasattr(x, attr):
            return np.asarray(getattr(x, attr), dtype=float)
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class Measure:
    """Probability vector on ``n`` atoms."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ArgumentError("measure needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ArgumentError("measure weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ArgumentError(f"measure weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, values) -> "Measure":
        v = np.asarray(values, dtype=float).ravel()
        return cls(v / v.sum())

    @classmethod
    def uniform(cls, n: int) -> "Measure":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative square cost with its largest entry cached."""

    entries: np.ndarray
    max_abs: float = field(init=False)

    def __post_init__(self):
        C = np.array(self.entries, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ArgumentError(f"cost matrix must be square, got shape {C.shape}")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise ArgumentError("cost entries must be finite and nonnegative")
        C.setflags(write=False)
        object.__setattr__(self, "entries", C)
        object.__setattr__(self, "max_abs", float(C.max()))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class DualPotentials:
    """Log-scalings ``(u, v)`` of the plan ``diag(e^u) e^{-C/eta} diag(e^v)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if u.shape != v.shape:
            raise ArgumentError("u and v must have the same length")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ArgumentError("dual potentials must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, n: int) -> "DualPotentials":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_scaled(cls, alpha, beta, eta: float) -> "DualPotentials":
        """Inverse of :meth:`scaled`: ``u = alpha / eta - 1/2``."""
        return cls(np.asarray(alpha) / eta - 0.5, np.asarray(beta) / eta - 0.5)

    def scaled(self, eta: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(alpha, beta)`` with ``alpha_i = eta * (u_i + 1/2)``."""
        return eta * (self.u + 0.5), eta * (self.v + 0.5)

    def recentred(self) -> "DualPotentials":
        """Shift ``u`` so that ``max u >= 0 >= min u``; ``f`` is unchanged."""
        s = 0.5 * (self.u.max() + self.u.min())
        return DualPotentials(self.u - s, self.v + s)


@dataclass(frozen=True)
class TransportPlan:
    entries: np.ndarray
    feasible_flag: bool = False

    def __post_init__(self):
        X = np.asarray(self.entries, dtype=float)
        if X.ndim != 2:
            raise ArgumentError("transport plan must be a matrix")
        # Underflowed or rounded-negative noise is not tolerated.
        if np.any(X < 0):
            raise ArgumentError("transport plan entries must be nonnegative")
        object.__setattr__(self, "entries", X)

    @classmethod
    def checked(cls, X, r, c) -> "TransportPlan":
        """Wrap ``X`` and set ``feasible_flag`` from its marginal error."""
        return cls(X, marginal_error(X, r, c) <= FEASIBLE_TOL)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass
class SolverConfig:
    """Knobs shared by all iterative solvers.

    ``eps_prime`` is the marginal tolerance the solver itself stops at; the
    approximation driver passes half of its own tolerance here.
    """

    eps_prime: float
    max_iter: int = 100_000
    seed: int = 0
    normalization_trick: bool = False
    assert_bounds: bool = False

    def __post_init__(self):
        if not self.eps_prime > 0:
            raise ConfigurationError("eps_prime must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


class Termination(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    error: float
    dual_f: float
    elapsed_ns: int


@dataclass
class SolveReport:
    """Per-iteration trace plus bookkeeping of a single solve.

    ``violations`` maps the name of each runtime-checked inequality to the
    number of iterations at which it failed; ``bound_violations`` is their
    total.  ``stats`` holds method specific counters (gradient calls, ...).
    """

    method: str
    seed: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    termination: Termination = Termination.MAX_ITERATIONS
    violations: dict[str, int] = field(default_factory=dict)
    checks: dict[str, int] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def bound_violations(self) -> int:
        return sum(self.violations.values())

    @property
    def final_error(self) -> float:
        return self.trace[-1].error

    def check(self, name: str, ok: bool) -> bool:
        self.checks[name] = self.checks.get(name, 0) + 1
        if not ok:
            self.violations[name] = self.violations.get(name, 0) + 1
        return ok

    def errors(self) -> np.ndarray:
        return np.array([rec.error for rec in self.trace])


# ---------------------------------------------------------------------------
# Log-domain helpers


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray | float:
    """Stable ``log(sum(exp(a)))``; rows that are all ``-inf`` give ``-inf``."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.ravel()[0])
    return np.squeeze(out, axis=axis)


def log_kernel(C, eta: float) -> np.ndarray:
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    return -_as_array(C) / eta


def log_plan(u, v, logK) -> np.ndarray:
    return u[:, None] + v[None, :] + logK


def log_marginals(u, v, logK) -> tuple[np.ndarray, np.ndarray]:
    """Log row and column sums of ``B(u, v)``."""
    L = log_plan(u, v, logK)
    return logsumexp(L, axis=1), logsumexp(L, axis=0)


def _check_dims(n: int, *arrays):
    for a in arrays:
        if a.shape[0] != n:
            raise ArgumentError(f"dimension mismatch: expected {n}, got {a.shape[0]}")


# ---------------------------------------------------------------------------
# Operations


def plan_from_potentials(p: DualPotentials, C, eta: float) -> TransportPlan:
    """Materialize ``B(u, v)`` entrywise as ``exp(u_i + v_j - C_ij / eta)``."""
    Ca = _as_array(C)
    _check_dims(Ca.shape[0], p.u, p.v)
    if Ca.shape[1] != p.v.shape[0]:
        raise ArgumentError("cost columns do not match v")
    L = log_plan(p.u, p.v, log_kernel(Ca, eta))
    return TransportPlan(np.exp(L))


def dual_f(p: DualPotentials, C, eta: float, r, c) -> float:
    """``1^T B(u,v) 1 - <u, r> - <v, c>``."""
    r, c, Ca = _as_array(r), _as_array(c), _as_array(C)
    _check_dims(Ca.shape[0], p.u, p.v, r, c)
    total = np.exp(logsumexp(log_plan(p.u, p.v, log_kernel(Ca, eta))))
    return float(total - p.u @ r - p.v @ c)


def dual_gradient(p: DualPotentials, C, eta: float, r, c) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`dual_f`: ``(r(B) - r, c(B) - c)``."""
    lr, lc = log_marginals(p.u, p.v, log_kernel(C, eta))
    return np.exp(lr) - _as_array(r), np.exp(lc) - _as_array(c)


def dual_phi(alpha, beta, C, eta: float, r, c) -> float:
    """Dual of the regularized problem in the scaled variables ``(alpha, beta)``.

    Normalized so that ``dual_phi(eta (u + 1/2), eta (v + 1/2)) = eta (f(u, v) - 1)``.
    """
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    alpha, beta = np.asarray(alpha, float), np.asarray(beta, float)
    expo = (alpha[:, None] + beta[None, :] - _as_array(C)) / eta - 1.0
    return float(eta * np.exp(logsumexp(expo)) - alpha @ _as_array(r) - beta @ _as_array(c))


def marginal_error(X, r, c) -> float:
    """``||X 1 - r||_1 + ||X^T 1 - c||_1`` (the error ``E_t`` or ``d(X)``)."""
    Xa, r, c = _as_array(X), _as_array(r), _as_array(c)
    if Xa.shape != (r.size, c.size):
        raise ArgumentError(f"plan shape {Xa.shape} does not match marginals")
    return float(np.abs(Xa.sum(axis=1) - r).sum() + np.abs(Xa.sum(axis=0) - c).sum())


def _xlogy_ratio(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a * log(a / b)`` with ``0 log 0 = 0``."""
    out = np.zeros(np.broadcast(a, b).shape)
    pos = np.broadcast_to(a > 0, out.shape)
    a_b = np.broadcast_to(a, out.shape)[pos]
    b_b = np.broadcast_to(b, out.shape)[pos]
    with np.errstate(divide="ignore"):
        out[pos] = a_b * (np.log(a_b) - np.log(b_b))
    return out


def rho(a, b):
    """Single-coordinate progress ``b - a + a log(a / b)``; vectorized."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0):
        raise ArgumentError("rho needs a >= 0")
    if np.any(b <= 0):
        raise ArgumentError("rho needs b > 0")
    a, b = np.broadcast_arrays(a, b)
    out = np.array(b, dtype=float, copy=True)
    pos = a > 0
    ap, bp = a[pos], b[pos]
    with np.errstate(over="ignore"):
        d = (bp - ap) / ap
    near = np.abs(d) <= 1.0
    out[pos] = np.where(near, ap * (d - np.log1p(np.where(near, d, 0.0))), bp - ap + _xlogy_ratio(ap, bp))
    return float(out) if out.ndim == 0 else out


def kl_progress(a, b) -> float:
    """Block progress ``1^T (b - a) + sum_i a_i log(a_i / b_i)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ArgumentError("kl_progress needs b > 0 componentwise")
    if np.any(a < 0):
        raise ArgumentError("kl_progress needs a >= 0")
    return float(np.sum(b - a) + _xlogy_ratio(a, b).sum())


def dual_radius_bound(C, eta: float, r, c) -> float:
    """Infinity-norm radius ``R`` containing some optimal dual pair."""
    r, c = _as_array(r), _as_array(c)
    m = min(r.min(), c.min())
    if m <= 0:
        raise ArgumentError("dual radius needs strictly positive marginals")
    Ca = _as_array(C)
    return float(Ca.max() / eta + np.log(Ca.shape[0]) - 2.0 * np.log(m))


def round_to_feasible(X, r, c) -> TransportPlan:
    """Project a nonnegative plan onto the transportation polytope.

    Rows are clipped down to ``r``, then columns down to ``c``; the missing
    mass is restored by a rank-one correction.  A zero row/column keeps
    scaling factor 1.
    """
    Xa, r, c = _as_array(X), _as_array(r), _as_array(c)
    if Xa.shape != (r.size, c.size):
        raise ArgumentError(f"plan shape {Xa.shape} does not match marginals")
    if np.any(Xa < 0):
        raise ArgumentError("rounding needs a nonnegative plan")

    def factors(target, sums):
        f = np.ones_like(sums)
        pos = sums > 0
        f[pos] = np.minimum(target[pos] / sums[pos], 1.0)
        return f

    X1 = Xa * factors(r, Xa.sum(axis=1))[:, None]
    X2 = X1 * factors(c, X1.sum(axis=0))[None, :]
    err_r = r - X2.sum(axis=1)
    err_c = c - X2.sum(axis=0)
    # Clipping only removes mass, so both errors are nonnegative up to ulps.
    err_r = np.maximum(err_r, 0.0)
    err_c = np.maximum(err_c, 0.0)
    total = err_r.sum()
    out = X2 + np.outer(err_r, err_c) / total if total > 0 else X2
    return TransportPlan.checked(out, r, c)


def ot_cost(X, C) -> float:
    Xa, Ca = _as_array(X), _as_array(C)
    if Xa.shape != Ca.shape:
        raise ArgumentError("plan and cost shapes differ")
    return float(np.sum(Ca * Xa))


def entropy(X) -> float:
    """``H(X) = -sum X log X`` with ``0 log 0 = 0``."""
    Xa = _as_array(X)
    if np.any(Xa < 0):
        raise ArgumentError("entropy needs a nonnegative matrix")
    return float(-_xlogy_ratio(Xa, np.ones_like(Xa)).sum())


def regularized_objective(X, C, eta: float) -> float:
    """``<C, X> - eta H(X)``."""
    return ot_cost(X, C) - eta * entropy(X)


def independent_coupling(r, c) -> TransportPlan:
    r, c = _as_array(r), _as_array(c)
    return TransportPlan.checked(np.outer(r, c), r, c)
