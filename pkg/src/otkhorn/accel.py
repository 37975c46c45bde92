"""Accelerated randomized scaling: Randkhorn (block) and Gandkhorn (coordinate).

Both keep an estimate sequence ``(theta, u~, v~)``, take a random gradient
step on it, and fall back on an exact greedy scaling from whichever of the
check point and the extrapolated point has the lower dual value.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .classic import MONOTONE_TOL, _prepare, _rho_vec
from .core import (
    DualPotentials,
    SolveReport,
    SolverConfig,
    Termination,
    TraceRecord,
    TransportPlan,
    log_plan,
    logsumexp,
)

_TWO64 = 1 << 64


class PhiloxStream:
    """Fair coins and uniform indices from a Philox-4x64 counter generator."""

    def __init__(self, seed: int):
        self.bitgen = np.random.Philox(seed)

    def _raw(self) -> int:
        return int(self.bitgen.random_raw())

    def coin(self) -> int:
        return self._raw() >> 63

    def index(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be positive")
        limit = _TWO64 - _TWO64 % n
        while True:
            x = self._raw()
            if x < limit:
                return x % n


def theta_next(theta: float) -> float:
    """Next momentum weight; satisfies ``(out/theta)^2 = 1 - out``."""
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must lie in (0, 1], got {theta!r}")
    return theta * (math.sqrt(theta * theta + 4.0) - theta) / 2.0


@dataclass
class AccelState:
    check: DualPotentials
    tilde: DualPotentials
    theta: float
    iter: int
    rng: PhiloxStream

    @classmethod
    def initial(cls, n: int, seed: int, check: DualPotentials | None = None) -> "AccelState":
        z = DualPotentials.zeros(n)
        return cls(check if check is not None else z, z, 1.0, 0, PhiloxStream(seed))


def randkhorn_bound(n: int, eta: float, R: float, eps_prime: float) -> float:
    return 2.0 + 100.0 * n ** (1 / 3) * eta ** (1 / 3) * R ** (2 / 3) * eps_prime ** (-2 / 3)


def gandkhorn_bound(n: int, eta: float, R: float, eps_prime: float) -> float:
    return 2.0 + 100.0 * n ** (4 / 3) * eta ** (1 / 3) * R ** (2 / 3) * eps_prime ** (-2 / 3)


def _f_total(u, v, logK, r, c) -> float:
    # Log-domain mass; overflow to +inf is deliberate (loses monotone search).
    with np.errstate(over="ignore"):
        return float(np.exp(logsumexp(log_plan(u, v, logK)))) - float(u @ r) - float(v @ c)


def _kl(a, b) -> float:
    return float(np.sum(_rho_vec(a, b)))


def _accelerated(C, eta, r, c, cfg, init, coordinate: bool):
    Ca, r, c, logK, u0, v0 = _prepare(C, eta, r, c, cfg, init)
    n = r.size
    log_r, log_c = np.log(r), np.log(c)
    name = "gandkhorn" if coordinate else "randkhorn"
    report = SolveReport(name, seed=cfg.seed)
    st = AccelState.initial(n, cfg.seed, DualPotentials(u0, v0) if init is not None else None)
    cu, cv = st.check.u.copy(), st.check.v.copy()
    tu, tv = st.tilde.u.copy(), st.tilde.v.copy()
    theta = st.theta
    f_check = _f_total(cu, cv, logK, r, c)
    t0 = time.perf_counter_ns()
    status = Termination.MAX_ITERATIONS
    t = 0
    accepted = 0
    most_touched = 0
    while True:
        bu = (1.0 - theta) * cu + theta * tu
        bv = (1.0 - theta) * cv + theta * tv
        side = st.rng.coin()
        hu, hv = bu.copy(), bv.copy()
        prev_u, prev_v = tu, tv
        if coordinate:
            k = st.rng.index(n)
            if side == 0:
                g = float(np.exp(logsumexp(bu[k] + bv + logK[k]))) - r[k]
                step = g / (8.0 * n * eta * theta)
                tu = tu.copy()
                tu[k] -= step
                hu[k] -= 2.0 * n * theta * step
            else:
                g = float(np.exp(logsumexp(bv[k] + bu + logK[:, k]))) - c[k]
                step = g / (8.0 * n * eta * theta)
                tv = tv.copy()
                tv[k] -= step
                hv[k] -= 2.0 * n * theta * step
        else:
            L = log_plan(bu, bv, logK)
            if side == 0:
                step = (np.exp(logsumexp(L, axis=1)) - r) / (8.0 * eta * theta)
                tu = tu - step
                hu = bu - 2.0 * theta * step
            else:
                step = (np.exp(logsumexp(L, axis=0)) - c) / (8.0 * eta * theta)
                tv = tv - step
                hv = bv - 2.0 * theta * step
        touched = int(np.count_nonzero(tu != prev_u) + np.count_nonzero(tv != prev_v))
        most_touched = max(most_touched, touched)
        # Monotone search between the check point and the extrapolation.
        f_hat = _f_total(hu, hv, logK, r, c) if np.all(np.isfinite(hu)) and np.all(np.isfinite(hv)) else math.inf
        if not np.isfinite(f_hat):
            f_hat = math.inf
        if f_hat < f_check:
            u, v, f_t = hu, hv, f_hat
            accepted += 1
        else:
            u, v, f_t = cu, cv, f_check
        if cfg.assert_bounds:
            report.check("monotone_search", f_t <= f_check + MONOTONE_TOL)
        L = log_plan(u, v, logK)
        lr = logsumexp(L, axis=1)
        lc = logsumexp(L, axis=0)
        rs, cs = np.exp(lr), np.exp(lc)
        if not (np.isfinite(f_t) and np.all(np.isfinite(rs)) and np.all(np.isfinite(cs))):
            status = Termination.NUMERICAL_FAILURE
            break
        err = float(np.abs(rs - r).sum() + np.abs(cs - c).sum())
        report.trace.append(TraceRecord(t, err, f_t, time.perf_counter_ns() - t0))
        if err <= cfg.eps_prime:
            status = Termination.CONVERGED
            break
        if t >= cfg.max_iter:
            break
        # Exact greedy scaling from (u, v).
        cu, cv = u.copy(), v.copy()
        if coordinate:
            gr, gc = _rho_vec(r, rs), _rho_vec(c, cs)
            I, J = int(np.argmax(gr)), int(np.argmax(gc))
            if gr[I] >= gc[J]:
                cu[I] = log_r[I] - logsumexp(cv + logK[I])
                gain = gr[I]
            else:
                cv[J] = log_c[J] - logsumexp(cu + logK[:, J])
                gain = gc[J]
            f_next = _f_total(cu, cv, logK, r, c)
        else:
            k_r, k_c = _kl(r, rs), _kl(c, cs)
            if k_r >= k_c:
                cu = log_r - logsumexp(cv[None, :] + logK, axis=1)
            else:
                cv = log_c - logsumexp(cu[:, None] + logK, axis=0)
            # The scaled block matches its marginal, so the mass is 1.
            f_next = 1.0 - float(cu @ r) - float(cv @ c)
        if cfg.assert_bounds:
            report.check("check_monotone", f_next <= f_t + MONOTONE_TOL)
            if coordinate:
                report.check("exact_step_decrease", f_t - f_next >= gain * (1 - 1e-9) - 1e-12)
            else:
                report.check("exact_step_decrease", f_t - f_next >= 0.5 * (k_r + k_c) * (1 - 1e-9) - 1e-12)
        f_check = f_next
        th = theta_next(theta)
        t += 1
        report.check("theta_ceiling", 0.0 < th <= 2.0 / (t + 2) * (1 + 1e-15))
        report.check("theta_identity", abs((th / theta) ** 2 - (1.0 - th)) <= 1e-12)
        theta = th
    st.check, st.tilde, st.theta, st.iter = DualPotentials(cu, cv), DualPotentials(tu, tv), theta, t
    report.termination = status
    report.stats["theta"] = theta
    report.stats["extrapolation_accepted"] = accepted
    report.stats["max_tilde_entries_changed"] = most_touched
    if status is Termination.NUMERICAL_FAILURE:
        return None, None, report
    return DualPotentials(u, v), TransportPlan(np.exp(log_plan(u, v, logK))), report


def randkhorn(C, eta: float, r, c, cfg: SolverConfig, init: DualPotentials | None = None):
    """Accelerated random block scaling.  Returns ``(potentials, plan, report)``.

    The gradient step on the estimate sequence divides by ``8 eta theta``;
    with small ``eta`` it overshoots and the monotone search keeps the check
    point, so progress falls back to exact block scaling.
    """
    return _accelerated(C, eta, r, c, cfg, init, coordinate=False)


def gandkhorn(C, eta: float, r, c, cfg: SolverConfig, init: DualPotentials | None = None):
    """Accelerated random coordinate scaling with a greedy exact step."""
    return _accelerated(C, eta, r, c, cfg, init, coordinate=True)
