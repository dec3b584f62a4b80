"""Constrained solve: find the transmission price whose relaxed optimum meets
the frequency budget, then return a deterministic policy or a two-policy
mixture.

The price search intersects tangents of the piecewise-linear concave
relaxed-cost curve (slope = transmission frequency), which converges in at
most one step per linear segment and independently of any tolerance.  A
plain bisection on the frequency is kept as the baseline.  All frequency
and cost numbers inside the search come from exact stationary evaluation of
the solved policies, never from simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BadBracketError,
    DegenerateSlopesError,
    DomainError,
    InfeasiblePairError,
    NoProgressError,
)
from .evaluation import stationary_metrics
from .model import SystemModel
from .solver import DeterministicPolicy, ThresholdView, spi_solve

F_MATCH_TOL = 1e-6
L_MATCH_RTOL = 1e-8


@dataclass
class SearchPoint:
    lam: float
    J: float
    F: float
    L: float

    def as_tuple(self):
        return (self.lam, self.J, self.F, self.L)


@dataclass
class SearchTrace:
    """Ordered record of the multiplier search: every solved point plus the
    bracket it left behind."""

    method: str
    points: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def record(self, point: SearchPoint, interval: tuple):
        self.points.append(
            {
                "lam": point.lam,
                "F": point.F,
                "J": point.J,
                "L": point.L,
                "interval": (float(interval[0]), float(interval[1])),
            }
        )

    @property
    def iterations(self) -> int:
        return len(self.points)


@dataclass
class MixturePolicy:
    """Per-slot randomization between two switching policies.

    With probability p the infeasible policy (solved just below the critical
    price, transmits more) acts; otherwise the feasible one.  p is first set
    by the linear interpolation of the two frequencies and then recalibrated
    so the stationary frequency of the randomized kernel meets the budget
    exactly; both values are kept.
    """

    p: float
    policy_minus: DeterministicPolicy
    policy_plus: DeterministicPolicy
    differing_states: list
    p_linear: float = float("nan")

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"mixture probability {self.p} outside [0, 1]")


@dataclass
class ConstrainedSolution:
    kind: str  # "deterministic" | "mixture"
    lam_star: float
    policy: DeterministicPolicy | MixturePolicy
    F: float
    J: float
    trace: SearchTrace
    view_minus: ThresholdView | None = None
    view_plus: ThresholdView | None = None

    @property
    def is_mixture(self) -> bool:
        return self.kind == "mixture"


def intersection_step(point_minus, point_plus):
    """Intersect the two tangents of the concave relaxed-cost curve.

    Inputs are (lam, J, F, L) tuples at the bracket ends with F_minus >
    F_plus strictly; returns the abscissa of the intersection and the
    tangent height there.  For points on a concave piecewise-linear curve
    the abscissa falls inside the bracket.
    """
    lam_m, j_m, f_m, l_m = point_minus
    lam_p, j_p, f_p, l_p = point_plus
    if lam_m >= lam_p:
        raise DomainError(f"bracket not ordered: {lam_m} >= {lam_p}")
    if f_m <= f_p:
        raise DegenerateSlopesError(
            f"tangent slopes {f_m} and {f_p} do not cross; both ends share a segment"
        )
    lam_next = (j_p - j_m) / (f_m - f_p)
    l_tilde = f_m * (lam_next - lam_m) + l_m
    return float(lam_next), float(l_tilde)


class _PointSolver:
    """SPI + stationary metrics per price, with warm starts and caching."""

    def __init__(self, model: SystemModel):
        self.model = model
        self.cache = {}
        self._warm_policy = None
        self._warm_bias = None

    def solve(self, lam: float):
        lam = float(lam)
        if lam in self.cache:
            return self.cache[lam]
        policy, gb, view = spi_solve(
            self.model, lam, policy0=self._warm_policy, v0=self._warm_bias
        )
        metrics = stationary_metrics(self.model, policy)
        point = SearchPoint(lam=lam, J=metrics.J, F=metrics.F, L=metrics.J + lam * metrics.F)
        entry = (policy, view, metrics, point)
        self.cache[lam] = entry
        self._warm_policy, self._warm_bias = policy, gb.bias
        return entry


def bisection_solve(
    model: SystemModel,
    f_max: float,
    lambda_max: float,
    epsilon_tol: float,
    point_solver: _PointSolver | None = None,
):
    """Baseline bisection on the transmission frequency.

    Halves the bracket by the sign of F - f_max until it is narrower than
    epsilon_tol; the iteration count is ceil(log2(lambda_max/epsilon_tol)).
    """
    if not (0.0 < f_max <= 1.0):
        raise DomainError(f"f_max {f_max} outside (0, 1]")
    ps = point_solver or _PointSolver(model)
    trace = SearchTrace(method="bisection")

    _, _, _, p0 = ps.solve(0.0)
    if p0.F <= f_max:
        trace.record(p0, (0.0, 0.0))
        return 0.0, trace
    _, _, _, pmax = ps.solve(lambda_max)
    if pmax.F >= f_max:
        raise BadBracketError(
            f"F at lambda_max is {pmax.F:.6f} >= budget {f_max}; raise lambda_max"
        )
    lo, hi = 0.0, float(lambda_max)
    while hi - lo >= epsilon_tol:
        mid = 0.5 * (lo + hi)
        _, _, _, pt = ps.solve(mid)
        if pt.F >= f_max:
            lo = mid
        else:
            hi = mid
        trace.record(pt, (lo, hi))
    return 0.5 * (lo + hi), trace


def build_mixture(
    model: SystemModel,
    policy_minus: DeterministicPolicy,
    policy_plus: DeterministicPolicy,
    f_max: float,
) -> MixturePolicy:
    """Mix two policies so the stationary transmission frequency hits f_max.

    policy_minus must over-transmit and policy_plus stay within budget.  The
    linear interpolation seeds p; a root-find on the stationary frequency of
    the randomized kernel then pins it to the budget.
    """
    f_minus = stationary_metrics(model, policy_minus).F
    f_plus = stationary_metrics(model, policy_plus).F
    if not (f_plus <= f_max + F_MATCH_TOL and f_max <= f_minus + F_MATCH_TOL):
        raise InfeasiblePairError(
            f"budget {f_max} outside the pair's frequencies [{f_plus:.6f}, {f_minus:.6f}]"
        )
    diff = [int(i) for i in np.flatnonzero(policy_minus.actions != policy_plus.actions)]
    if f_minus - f_plus <= F_MATCH_TOL:
        p_lin = 0.0
    else:
        p_lin = (f_max - f_plus) / (f_minus - f_plus)
    p_lin = min(max(p_lin, 0.0), 1.0)

    def freq_gap(p):
        mix = MixturePolicy(
            p=p, policy_minus=policy_minus, policy_plus=policy_plus,
            differing_states=diff, p_linear=p_lin,
        )
        return stationary_metrics(model, mix).F - f_max

    gap_lin = freq_gap(p_lin)
    if abs(gap_lin) <= F_MATCH_TOL * 1e-2:
        p_star = p_lin
    else:
        g0, g1 = freq_gap(0.0), freq_gap(1.0)
        if g0 > 0 or g1 < 0:
            raise InfeasiblePairError(
                f"stationary frequency range [{g0 + f_max:.6f}, {g1 + f_max:.6f}] misses {f_max}"
            )
        p_star = brentq(freq_gap, 0.0, 1.0, xtol=1e-12)
    return MixturePolicy(
        p=float(p_star),
        policy_minus=policy_minus,
        policy_plus=policy_plus,
        differing_states=diff,
        p_linear=float(p_lin),
    )


def solve_cmdp(
    model: SystemModel,
    f_max: float,
    lambda_max: float = 1000.0,
    epsilon_mix: float = 1e-6,
    max_iters: int = 100,
) -> ConstrainedSolution:
    """Full constrained solve by intersection search over the price.

    Returns the zero-price policy when it already fits the budget; otherwise
    iterates tangent intersections until either a solved point meets the
    budget exactly (deterministic optimum) or the intersection lands on the
    curve, in which case the two policies just below and above the critical
    price are mixed.
    """
    if not (0.0 < f_max <= 1.0):
        raise DomainError(f"f_max {f_max} outside (0, 1]")
    ps = _PointSolver(model)
    trace = SearchTrace(method="intersection")

    pol0, view0, met0, p0 = ps.solve(0.0)
    if p0.F <= f_max:
        trace.record(p0, (0.0, 0.0))
        return ConstrainedSolution(
            kind="deterministic", lam_star=0.0, policy=pol0,
            F=met0.F, J=met0.J, trace=trace, view_plus=view0,
        )

    _, _, _, pmax = ps.solve(lambda_max)
    if pmax.F >= f_max:
        raise BadBracketError(
            f"F at lambda_max is {pmax.F:.6f} >= budget {f_max}; raise lambda_max"
        )

    lo, hi = p0, pmax
    lam_star = None
    for _ in range(max_iters):
        if lo.F <= f_max or hi.F > f_max:
            raise NoProgressError(
                f"bracket frequencies [{hi.F:.6f}, {lo.F:.6f}] no longer straddle {f_max}"
            )
        lam_next, l_tilde = intersection_step(lo.as_tuple(), hi.as_tuple())
        pol_n, view_n, met_n, pt = ps.solve(lam_next)
        trace.record(pt, (lo.lam, hi.lam))
        if abs(pt.F - f_max) <= F_MATCH_TOL:
            # The budget sits on this segment: the solved policy is optimal
            # with equality, no mixing needed.
            return ConstrainedSolution(
                kind="deterministic", lam_star=lam_next, policy=pol_n,
                F=met_n.F, J=met_n.J, trace=trace, view_plus=view_n,
            )
        if abs(pt.L - l_tilde) <= L_MATCH_RTOL * max(1.0, abs(pt.L)):
            lam_star = lam_next
            break
        if pt.F > f_max:
            lo = pt
        else:
            hi = pt
    if lam_star is None:
        raise NoProgressError(f"intersection search did not settle in {max_iters} steps")

    eps = max(epsilon_mix, epsilon_mix * lam_star)
    lam_minus = max(lam_star - eps, 0.0)
    lam_plus = lam_star + eps
    pol_m, view_m, met_m, _ = ps.solve(lam_minus)
    pol_p, view_p, met_p, _ = ps.solve(lam_plus)
    trace.extras["epsilon"] = eps
    if abs(met_p.F - f_max) <= F_MATCH_TOL:
        return ConstrainedSolution(
            kind="deterministic", lam_star=lam_star, policy=pol_p,
            F=met_p.F, J=met_p.J, trace=trace, view_plus=view_p,
        )
    if abs(met_m.F - f_max) <= F_MATCH_TOL:
        return ConstrainedSolution(
            kind="deterministic", lam_star=lam_star, policy=pol_m,
            F=met_m.F, J=met_m.J, trace=trace, view_plus=view_m,
        )
    mix = build_mixture(model, pol_m, pol_p, f_max)
    trace.extras["p_linear"] = mix.p_linear
    trace.extras["p_recalibrated"] = mix.p
    met = stationary_metrics(model, mix)
    return ConstrainedSolution(
        kind="mixture", lam_star=lam_star, policy=mix,
        F=met.F, J=met.J, trace=trace, view_minus=view_m, view_plus=view_p,
    )
