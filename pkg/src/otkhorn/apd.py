"""Adaptive primal-dual accelerated methods (mirror descent and gradient variants)."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ArgumentError,
    SolveReport,
    SolverConfig,
    Termination,
    TraceRecord,
    _as_array,
    dual_radius_bound,
)

MAX_TRIALS = 200


@dataclass(frozen=True)
class MirrorMap:
    """Strongly convex prox function.

    ``norm`` is the norm in which ``1/delta`` strong convexity holds; the line
    search guard is measured in it too.  ``step(z, g, alpha)`` returns
    ``argmin_w <g, w> + B(w, z)/alpha``.
    """

    delta: float
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    bregman: Callable[[np.ndarray, np.ndarray], float]
    step: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    norm: Callable[[np.ndarray], float]
    name: str = "custom"

    @classmethod
    def scaled_quadratic(cls, n: int) -> "MirrorMap":
        """``(1/2n)||z||^2`` with ``delta = n`` and the sup norm."""
        s = 1.0 / n
        return cls(
            delta=float(n),
            value=lambda z: 0.5 * s * float(z @ z),
            gradient=lambda z: s * z,
            bregman=lambda z, w: 0.5 * s * float((z - w) @ (z - w)),
            step=lambda z, g, a: z - n * a * g,
            norm=lambda z: float(np.abs(z).max()),
            name="scaled_quadratic",
        )

    @classmethod
    def euclidean(cls) -> "MirrorMap":
        """``(1/2)||z||_2^2`` with ``delta = 1`` and the 2-norm."""
        return cls(
            delta=1.0,
            value=lambda z: 0.5 * float(z @ z),
            gradient=lambda z: z,
            bregman=lambda z, w: 0.5 * float((z - w) @ (z - w)),
            step=lambda z, g, a: z - a * g,
            norm=lambda z: float(np.sqrt(z @ z)),
            name="euclidean",
        )


@dataclass(frozen=True)
class DualProblem:
    """Dual of ``min f(x) s.t. Ax = b``.

    ``evaluate(lam)`` returns ``(objective, gradient, x)`` from a single
    primal-map evaluation.  ``radius`` bounds the sup norm of some dual
    optimum when known.
    """

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    primal_map: Callable[[np.ndarray], np.ndarray]
    apply_A: Callable[[np.ndarray], np.ndarray]
    b: np.ndarray
    a_norm_1to1: float
    evaluate: Callable[[np.ndarray], tuple] | None = None
    radius: float | None = None
    strong_convexity: float | None = None  # of the primal objective w.r.t. ||.||_1

    def eval(self, lam: np.ndarray):
        if self.evaluate is not None:
            return self.evaluate(lam)
        x = self.primal_map(lam)
        return self.objective(lam), self.b - self.apply_A(x), x


@dataclass
class ApdState:
    lam: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    alpha_bar: float
    L: float
    M: float
    x_avg: np.ndarray
    iter: int = 0
    grad_calls: int = 0
    history: list = field(default_factory=list)


def x_of_lambda_ot(alpha, beta, C, eta: float) -> np.ndarray:
    """Entropic plan ``exp((-C_ij + alpha_i + beta_j)/eta - 1)``."""
    Ca = _as_array(C)
    return np.exp((np.asarray(alpha)[:, None] + np.asarray(beta)[None, :] - Ca) / eta - 1.0)


def ot_dual_problem(C, eta: float, r, c) -> DualProblem:
    """Dual of entropic OT with ``A vec(X) = (X 1; X^T 1)`` and ``b = (r; c)``.

    The multiplier is ``lam = -(alpha, beta)``.  ``A`` is never formed.
    """
    Ca, r, c = _as_array(C), _as_array(r), _as_array(c)
    n = r.size
    if Ca.shape != (n, n) or c.shape != (n,):
        raise ArgumentError("cost and marginals disagree in size")
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    b = np.concatenate([r, c]).astype(float)
    base = -Ca / eta - 1.0

    def primal(lam):
        with np.errstate(over="ignore"):
            return np.exp(base - (lam[:n, None] + lam[None, n:]) / eta)

    def apply_A(x):
        x = np.asarray(x).reshape(n, n)
        return np.concatenate([x.sum(axis=1), x.sum(axis=0)])

    def evaluate(lam):
        x = primal(lam)
        Ax = apply_A(x)
        return float(lam @ b + eta * Ax[:n].sum()), b - Ax, x

    R = dual_radius_bound(Ca, eta, r, c) if np.all(b > 0) else None
    return DualProblem(
        objective=lambda lam: evaluate(lam)[0],
        gradient=lambda lam: evaluate(lam)[1],
        primal_map=primal,
        apply_A=apply_A,
        b=b,
        a_norm_1to1=2.0,
        evaluate=evaluate,
        radius=None if R is None else eta * (R + 0.5),
        strong_convexity=eta,
    )


def step_size(delta: float, M: float, alpha_bar: float) -> float:
    return (1.0 + math.sqrt(1.0 + 4.0 * delta * M * alpha_bar)) / (2.0 * delta * M)


def apdamd_bound(a_norm: float, delta: float, R: float, eps_prime: float) -> float:
    """Iteration ceiling ``1 + 4 sqrt(2) ||A|| sqrt(delta (R + 1/2) / eps')``."""
    return 1.0 + 4.0 * math.sqrt(2.0) * a_norm * math.sqrt(delta * (R + 0.5) / eps_prime)


def apdamd(P: DualProblem, phi: MirrorMap, eps_prime: float, cfg: SolverConfig, name: str = "apdamd"):
    """Accelerated primal-dual mirror descent with a doubling line search.

    Returns ``(x, report, state)`` where ``x`` is the weighted primal average.
    With ``cfg.assert_bounds`` the accumulator growth, line-search ceiling,
    gradient-call count and residual bound are checked every iteration
    (they need ``P.strong_convexity``; the residual bound also ``P.radius``).
    """
    if not eps_prime > 0:
        raise ArgumentError("eps_prime must be positive")
    dim = P.b.size
    zero = np.zeros(dim)
    st = ApdState(zero.copy(), zero.copy(), zero.copy(), 0.0, 1.0, 1.0, None)
    L0 = st.L
    delta = phi.delta
    A2 = P.a_norm_1to1**2
    sc = P.strong_convexity
    check = cfg.assert_bounds and sc is not None
    report = SolveReport(name, seed=cfg.seed)
    t0 = time.perf_counter_ns()

    phi_lam, _, x_lam = P.eval(st.lam)
    st.x_avg = np.zeros_like(x_lam)
    err = float(np.abs(P.b).sum())
    report.trace.append(TraceRecord(0, err, phi_lam, 0))
    status = Termination.MAX_ITERATIONS
    while True:
        if err <= eps_prime:
            status = Termination.CONVERGED
            break
        if st.iter >= cfg.max_iter:
            break
        M = st.L / 2.0
        failed = True
        for _ in range(MAX_TRIALS):
            M *= 2.0
            a = step_size(delta, M, st.alpha_bar)
            a_bar = st.alpha_bar + a
            mu = (a * st.z + st.alpha_bar * st.lam) / a_bar
            phi_mu, g_mu, x_mu = P.eval(mu)
            z_new = phi.step(st.z, g_mu, a)
            lam_new = (a * z_new + st.alpha_bar * st.lam) / a_bar
            phi_new, _, _ = P.eval(lam_new)
            st.grad_calls += 2
            if not (np.isfinite(phi_mu) and np.all(np.isfinite(g_mu))):
                break
            d = lam_new - mu
            gap = phi_new - phi_mu - float(g_mu @ d)
            if np.isfinite(phi_new) and gap <= 0.5 * M * phi.norm(d) ** 2 + 1e-12 * max(1.0, abs(phi_mu)):
                failed = False
                break
        if failed:
            status = Termination.NUMERICAL_FAILURE
            break
        st.x_avg = (a * x_mu + st.alpha_bar * st.x_avg) / a_bar
        st.lam, st.z, st.mu, st.M = lam_new, z_new, mu, M
        report.check("step_identity", abs(delta * M * a * a - a_bar) <= 1e-10 * a_bar)
        report.check("alpha_bar_monotone", a_bar >= st.alpha_bar)
        st.alpha_bar = a_bar
        st.L = M / 2.0
        st.iter += 1
        t = st.iter
        err = float(np.abs(P.apply_A(st.x_avg) - P.b).sum())
        if not np.isfinite(err):
            status = Termination.NUMERICAL_FAILURE
            break
        if check:
            report.check("line_search_ceiling", M <= 2.0 * A2 / sc * (1 + 1e-12))
            calls = 4 * t + 4 + (2 * math.log(A2 / (2 * sc)) - 2 * math.log(L0)) / math.log(2)
            report.check("grad_call_audit", st.grad_calls <= calls + 1e-9)
            report.check("alpha_bar_growth", a_bar >= sc * (t + 1) ** 2 / (8 * delta * A2) * (1 - 1e-12))
            if P.radius is not None:
                report.check("residual_bound", err <= 4 * P.radius / a_bar * (1 + 1e-9) + 1e-14)
        report.trace.append(TraceRecord(t, err, phi_new, time.perf_counter_ns() - t0))
    report.termination = status
    report.stats["grad_calls"] = st.grad_calls
    report.stats["alpha_bar"] = st.alpha_bar
    return st.x_avg, report, st


def apdagd(P: DualProblem, eps_prime: float, cfg: SolverConfig):
    """Euclidean special case: ``(1/2)||z||^2``, ``delta = 1`` and a 2-norm guard.

    Returns ``(x, report, state)``.  The bound checks of :func:`apdamd` are
    stated for the sup-norm geometry and are not run here.
    """
    quiet = SolverConfig(
        eps_prime=cfg.eps_prime,
        max_iter=cfg.max_iter,
        seed=cfg.seed,
        normalization_trick=cfg.normalization_trick,
        assert_bounds=False,
    )
    return apdamd(P, MirrorMap.euclidean(), eps_prime, quiet, name="apdagd")


def approx_ot_apdamd(C, r, c, eps: float, **overrides):
    """Full pipeline with APDAMD inside; returns ``(plan, report)``."""
    from .driver import ApproxRequest, Method, approx_ot

    plan, report, _ = approx_ot(ApproxRequest(Method.APDAMD, eps, **overrides), C, r, c)
    return plan, report


def approx_ot_apdagd(C, r, c, eps: float, **overrides):
    """Full pipeline with APDAGD inside; returns ``(plan, report)``."""
    from .driver import ApproxRequest, Method, approx_ot

    plan, report, _ = approx_ot(ApproxRequest(Method.APDAGD, eps, **overrides), C, r, c)
    return plan, report
