"""End-to-end additive approximation of the transport cost."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .accel import gandkhorn, gandkhorn_bound, randkhorn, randkhorn_bound
from .apd import MirrorMap, apdagd, apdamd, apdamd_bound, ot_dual_problem
from .classic import greenkhorn, greenkhorn_bound, sinkhorn
from .core import (
    ArgumentError,
    ConfigurationError,
    CostMatrix,
    Measure,
    SolveReport,
    SolverConfig,
    Termination,
    TraceRecord,
    TransportPlan,
    _as_array,
    dual_radius_bound,
    independent_coupling,
    marginal_error,
    ot_cost,
    round_to_feasible,
)

# Largest admissible ||C||_inf / eta; beyond it exp(-C/eta) is meaningless even in logs.
LOG_DOMAIN_FLOOR = 1e6


class Method(enum.Enum):
    SINKHORN = "sinkhorn"
    GREENKHORN = "greenkhorn"
    APDAMD = "apdamd"
    APDAGD = "apdagd"
    RANDKHORN = "randkhorn"
    GANDKHORN = "gandkhorn"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ArgumentError(f"unknown method {name!r}; choose from {[m.value for m in cls]}") from None


@dataclass(frozen=True)
class ApproxRequest:
    method: Method
    eps: float
    eta: float | None = None
    eps_prime: float | None = None
    max_iter: int | None = None
    seed: int = 0
    assert_bounds: bool = False
    normalization_trick: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ArgumentError("eps must be a positive finite number")
        for name in ("eta", "eps_prime", "max_iter"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ArgumentError(f"{name} override must be positive")


@dataclass
class GuaranteeRecord:
    method: str
    n: int
    eps: float
    eta: float
    eps_prime: float
    R: float
    bound_iterations: float | None
    actual_iterations: int
    cost: float
    wall_ns: int
    seed: int
    termination: str

    def to_json(self) -> dict:
        return asdict(self)


def mix_marginals(r, c, eps_prime: float) -> tuple[Measure, Measure]:
    """Shrink towards uniform: ``(1 - e/8) r + e/(8n)``, every entry ``>= e/(8n)``."""
    if not 0 < eps_prime < 8:
        raise ArgumentError("eps_prime must lie in (0, 8)")
    r, c = _as_array(r), _as_array(c)
    n = r.size
    w = eps_prime / 8.0
    return Measure((1 - w) * r + w / n), Measure((1 - w) * c + w / n)


def iteration_bound(method: Method, n: int, eta: float, R: float, eps_prime: float) -> float | None:
    """Worst-case iteration count at solver tolerance ``eps_prime``, if one is known."""
    if method is Method.GREENKHORN:
        return greenkhorn_bound(n, R, eps_prime)
    if method is Method.APDAMD:
        return apdamd_bound(2.0, float(n), R, eps_prime)
    if method is Method.RANDKHORN:
        return randkhorn_bound(n, eta, R, eps_prime)
    if method is Method.GANDKHORN:
        return gandkhorn_bound(n, eta, R, eps_prime)
    return None


def run_solver(method: Method, C, eta: float, r, c, cfg: SolverConfig):
    """Dispatch one solve on fixed ``eta``; returns ``(plan array or None, report)``."""
    method = Method.parse(method)
    if method in (Method.APDAMD, Method.APDAGD):
        P = ot_dual_problem(C, eta, r, c)
        if method is Method.APDAMD:
            x, report, _ = apdamd(P, MirrorMap.scaled_quadratic(np.asarray(r).size), cfg.eps_prime, cfg)
        else:
            x, report, _ = apdagd(P, cfg.eps_prime, cfg)
        ok = report.termination is not Termination.NUMERICAL_FAILURE and np.all(np.isfinite(x))
        return (x if ok else None), report
    fn = {
        Method.SINKHORN: sinkhorn,
        Method.GREENKHORN: greenkhorn,
        Method.RANDKHORN: randkhorn,
        Method.GANDKHORN: gandkhorn,
    }[method]
    _, plan, report = fn(C, eta, r, c, cfg)
    return (None if plan is None else plan.entries), report


def approx_ot(req: ApproxRequest, C, r, c) -> tuple[TransportPlan | None, SolveReport, GuaranteeRecord]:
    """Plan with ``<C, X> <= OT(r, c) + eps`` and exact marginals."""
    Cm = C if isinstance(C, CostMatrix) else CostMatrix(_as_array(C))
    rm = r if isinstance(r, Measure) else Measure(_as_array(r))
    cm = c if isinstance(c, Measure) else Measure(_as_array(c))
    n = Cm.n
    if n < 2:
        raise ArgumentError("need at least two atoms")
    if rm.n != n or cm.n != n:
        raise ArgumentError("cost and marginals disagree in size")
    t0 = time.perf_counter_ns()
    method = req.method
    cmax = Cm.max_abs

    if cmax == 0:
        plan = independent_coupling(rm.weights, cm.weights)
        report = SolveReport(method.value, seed=req.seed, termination=Termination.CONVERGED)
        report.trace.append(TraceRecord(0, 0.0, float("nan"), 0))
        report.stats["note"] = "zero cost matrix: independent coupling returned"
        rec = GuaranteeRecord(method.value, n, req.eps, float("nan"), float("nan"), float("nan"), None, 0,
                              0.0, time.perf_counter_ns() - t0, req.seed, report.termination.value)
        return plan, report, rec

    eta = req.eta if req.eta is not None else req.eps / (4.0 * math.log(n))
    eps_prime = req.eps_prime if req.eps_prime is not None else req.eps / (8.0 * cmax)
    if cmax / eta > LOG_DOMAIN_FLOOR:
        raise ConfigurationError(
            f"||C||/eta = {cmax / eta:.3g} exceeds {LOG_DOMAIN_FLOOR:g}; eps={req.eps:g} is too small for this cost"
        )
    r_mix, c_mix = mix_marginals(rm.weights, cm.weights, eps_prime)
    target = eps_prime / 2.0
    cfg = SolverConfig(
        eps_prime=target,
        max_iter=req.max_iter if req.max_iter is not None else SolverConfig.max_iter,
        seed=req.seed,
        normalization_trick=req.normalization_trick,
        assert_bounds=req.assert_bounds,
    )
    X, report = run_solver(method, Cm.entries, eta, r_mix.weights, c_mix.weights, cfg)
    R = dual_radius_bound(Cm.entries, eta, r_mix.weights, c_mix.weights)
    bound = iteration_bound(method, n, eta, R, target)
    if req.assert_bounds and report.termination is Termination.CONVERGED:
        if method in (Method.GREENKHORN, Method.APDAMD):
            report.check("iteration_ceiling", report.iterations <= bound)
        report.check("solver_tolerance", report.final_error <= target)

    plan = None
    cost = float("nan")
    if X is not None:
        plan = round_to_feasible(X, rm.weights, cm.weights)
        cost = ot_cost(plan, Cm.entries)
        report.stats["rounded_marginal_error"] = marginal_error(plan, rm.weights, cm.weights)
        report.stats["mixing_error"] = float(
            np.abs(r_mix.weights - rm.weights).sum() + np.abs(c_mix.weights - cm.weights).sum()
        )
    rec = GuaranteeRecord(
        method=method.value,
        n=n,
        eps=req.eps,
        eta=eta,
        eps_prime=eps_prime,
        R=R,
        bound_iterations=bound,
        actual_iterations=report.iterations,
        cost=cost,
        wall_ns=time.perf_counter_ns() - t0,
        seed=req.seed,
        termination=report.termination.value,
    )
    return plan, report, rec
