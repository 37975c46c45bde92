"""Sinkhorn and Greenkhorn matrix scaling in log-potential form."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    ArgumentError,
    DualPotentials,
    SolveReport,
    SolverConfig,
    Termination,
    TraceRecord,
    TransportPlan,
    _as_array,
    log_kernel,
    log_marginals,
    log_plan,
    logsumexp,
)

log = logging.getLogger(__name__)

# Dual values must never increase; this slack absorbs rounding only.
MONOTONE_TOL = 1e-10
CACHE_REFRESH = 1000
CACHE_RTOL = 1e-9


@dataclass
class ClassicState:
    """Potentials together with the cached marginals of ``B(u, v)``."""

    potentials: DualPotentials
    row_sums: np.ndarray
    col_sums: np.ndarray
    iter: int = 0

    @classmethod
    def fresh(cls, potentials: DualPotentials, C, eta: float, iter: int = 0) -> "ClassicState":
        lr, lc = log_marginals(potentials.u, potentials.v, log_kernel(C, eta))
        return cls(potentials, np.exp(lr), np.exp(lc), iter)

    @property
    def mass(self) -> float:
        return float(self.row_sums.sum())


def apply_normalization_trick(s: ClassicState) -> ClassicState:
    """Shift both potentials by ``-log(m)/2`` so that ``1^T B 1 = 1``."""
    m = s.mass
    if not (np.isfinite(m) and m > 0):
        raise FloatingPointError(f"cannot normalize a plan of mass {m!r}")
    shift = 0.5 * np.log(m)
    p = DualPotentials(s.potentials.u - shift, s.potentials.v - shift)
    return ClassicState(p, s.row_sums / m, s.col_sums / m, s.iter)


def _prepare(C, eta, r, c, cfg, init):
    Ca, r, c = _as_array(C), _as_array(r), _as_array(c)
    n = Ca.shape[0]
    if Ca.shape != (n, n) or r.shape != (n,) or c.shape != (n,):
        raise ArgumentError("cost and marginals disagree in size")
    if np.any(r <= 0) or np.any(c <= 0):
        raise ArgumentError("scaling solvers need strictly positive marginals")
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    p = init if init is not None else DualPotentials.zeros(n)
    return Ca, r, c, log_kernel(Ca, eta), p.u.copy(), p.v.copy()


def _err(rs, cs, r, c) -> float:
    return float(np.abs(rs - r).sum() + np.abs(cs - c).sum())


def _finish(report, u, v, logK, status):
    report.termination = status
    p = DualPotentials(u, v) if np.all(np.isfinite(u)) and np.all(np.isfinite(v)) else None
    if p is None:
        return None, None, report
    return p, TransportPlan(np.exp(log_plan(u, v, logK))), report


def sinkhorn(C, eta: float, r, c, cfg: SolverConfig, init: DualPotentials | None = None):
    """Alternate exact row and column scalings until the marginal error is small.

    One iteration is a row update followed by a column update.  Returns
    ``(potentials, plan, report)``.
    """
    Ca, r, c, logK, u, v = _prepare(C, eta, r, c, cfg, init)
    n = r.size
    log_r, log_c = np.log(r), np.log(c)
    report = SolveReport("sinkhorn", seed=cfg.seed)
    t0 = time.perf_counter_ns()

    lr, lc = log_marginals(u, v, logK)
    rs, cs = np.exp(lr), np.exp(lc)
    err = _err(rs, cs, r, c)
    f = rs.sum() - u @ r - v @ c
    report.trace.append(TraceRecord(0, err, float(f), 0))

    t = 0
    status = Termination.MAX_ITERATIONS
    while True:
        if err <= cfg.eps_prime:
            status = Termination.CONVERGED
            break
        if t >= cfg.max_iter:
            break
        u = u + log_r - lr
        lc = logsumexp(log_plan(u, v, logK), axis=0)
        if cfg.assert_bounds:
            f_half = np.exp(lc).sum() - u @ r - v @ c
            report.check("dual_monotone", f_half <= f + MONOTONE_TOL)
            lr_half = logsumexp(log_plan(u, v, logK), axis=1)
            report.check("shift_row", np.abs(np.exp(lr_half) - r).sum() <= 1e-12 * max(1, n / 64))
            f = f_half
        v = v + log_c - lc
        lr, lc = log_marginals(u, v, logK)
        if cfg.normalization_trick:
            shift = 0.5 * logsumexp(lr)
            u, v, lr, lc = u - shift, v - shift, lr - 2 * shift, lc - 2 * shift
        rs, cs = np.exp(lr), np.exp(lc)
        if not (np.all(np.isfinite(rs)) and np.all(np.isfinite(cs))):
            status = Termination.NUMERICAL_FAILURE
            break
        f_new = rs.sum() - u @ r - v @ c
        if cfg.assert_bounds:
            report.check("dual_monotone", f_new <= f + MONOTONE_TOL)
            if not cfg.normalization_trick:
                report.check("shift_col", np.abs(cs - c).sum() <= 1e-12 * max(1, n / 64))
        f = f_new
        err = _err(rs, cs, r, c)
        t += 1
        report.trace.append(TraceRecord(t, err, float(f), time.perf_counter_ns() - t0))
    return _finish(report, u, v, logK, status)


def greenkhorn_bound(n: int, R: float, eps_prime: float) -> float:
    """Iteration ceiling ``2 + 112 n R / eps'``."""
    return 2.0 + 112.0 * n * R / eps_prime


def greenkhorn(C, eta: float, r, c, cfg: SolverConfig, init: DualPotentials | None = None):
    """Greedy single row/column scaling.

    The marginal caches are updated in O(n) per step and recomputed from
    scratch every ``CACHE_REFRESH`` iterations.  Ties go to the row, then to
    the lowest index.  Without ``init`` the start is the zero potentials
    shifted so that ``B`` has unit mass.
    """
    Ca, r, c, logK, u, v = _prepare(C, eta, r, c, cfg, init)
    n = r.size
    log_r, log_c = np.log(r), np.log(c)
    report = SolveReport("greenkhorn", seed=cfg.seed)
    t0 = time.perf_counter_ns()

    lr, lc = log_marginals(u, v, logK)
    rs, cs = np.exp(lr), np.exp(lc)
    f = rs.sum() - u @ r - v @ c
    if init is None or cfg.normalization_trick:
        # Unit starting mass; the per-step decrease bound relies on it.
        rs, cs, u, v, f = _normalize_greedy(rs, cs, u, v, f)
    err = _err(rs, cs, r, c)
    report.trace.append(TraceRecord(0, err, float(f), 0))

    t = 0
    status = Termination.MAX_ITERATIONS
    while True:
        if err <= cfg.eps_prime:
            status = Termination.CONVERGED
            break
        if t >= cfg.max_iter:
            break
        if not (np.all(rs > 0) and np.all(cs > 0)):
            # An underflowed marginal: refresh from the log domain.
            lr, lc = log_marginals(u, v, logK)
            rs, cs = np.exp(lr), np.exp(lc)
        gain_r = _rho_vec(r, rs)
        gain_c = _rho_vec(c, cs)
        I = int(np.argmax(gain_r))
        J = int(np.argmax(gain_c))
        if gain_r[I] >= gain_c[J]:
            line = v + logK[I]
            new = log_r[I] - logsumexp(line)
            old_b = np.exp(u[I] + line)
            new_b = np.exp(new + line)
            cs += new_b - old_b
            decrease = rs[I] - r[I] + r[I] * (new - u[I])
            rs[I] = r[I]
            u[I] = new
        else:
            line = u + logK[:, J]
            new = log_c[J] - logsumexp(line)
            old_b = np.exp(v[J] + line)
            new_b = np.exp(new + line)
            rs += new_b - old_b
            decrease = cs[J] - c[J] + c[J] * (new - v[J])
            cs[J] = c[J]
            v[J] = new
        f_new = f - decrease
        if cfg.normalization_trick:
            rs, cs, u, v, f_new = _normalize_greedy(rs, cs, u, v, f_new)
        t += 1
        if t % CACHE_REFRESH == 0:
            lr, lc = log_marginals(u, v, logK)
            rs_true, cs_true = np.exp(lr), np.exp(lc)
            drift = max(_rel_drift(rs, rs_true), _rel_drift(cs, cs_true))
            report.stats["cache_drift"] = max(report.stats.get("cache_drift", 0.0), drift)
            report.check("cache_coherence", drift <= CACHE_RTOL)
            rs, cs = rs_true, cs_true
            f_new = rs.sum() - u @ r - v @ c
        if not (np.all(np.isfinite(rs)) and np.all(np.isfinite(cs)) and np.isfinite(f_new)):
            status = Termination.NUMERICAL_FAILURE
            break
        if cfg.assert_bounds:
            report.check("dual_monotone", f_new <= f + MONOTONE_TOL)
            # Greedy step decreases the dual by at least E_t^2 / (28 n).
            lhs = f - f_new
            report.check("greenkhorn_decrease", lhs >= err * err / (28.0 * n) * (1 - 1e-9) - 1e-15)
        f = f_new
        err = _err(rs, cs, r, c)
        report.trace.append(TraceRecord(t, err, float(f), time.perf_counter_ns() - t0))
    report.stats["final_mass"] = float(rs.sum())
    return _finish(report, u, v, logK, status)


def _normalize_greedy(rs, cs, u, v, f):
    m = rs.sum()
    if not (np.isfinite(m) and m > 0):
        raise FloatingPointError(f"cannot normalize a plan of mass {m!r}")
    shift = 0.5 * np.log(m)
    # f(u - s, v - s) = f(u, v) + 1 - m + log m
    return rs / m, cs / m, u - shift, v - shift, f + 1.0 - m + np.log(m)


def _rel_drift(cached: np.ndarray, exact: np.ndarray) -> float:
    return float(np.abs(cached - exact).sum() / exact.sum())


def _rho_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Positive targets only (checked on entry), so no 0 log 0 branch here.
    # a (d - log1p d) keeps relative accuracy as b -> a; the textbook form
    # cancels to noise once gains drop below ~1e-17 and the argmax goes blind.
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d = (b - a) / a
        near = a * (d - np.log1p(d))
        far = b - a + a * (np.log(a) - np.log(b))
    return np.where(np.abs(d) <= 1.0, near, far)
