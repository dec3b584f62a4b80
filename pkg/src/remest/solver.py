"""Average-cost solvers for the relaxed problem at a fixed transmission price.

Two independent routes are kept deliberately separate:

* ``spi_solve`` runs policy iteration restricted to switching policies
  (transmit only when the impending consecutive-error age reaches a
  per-(source, content, info-age) threshold; states that will be synced
  after aging are pinned to idle).
* ``rvi_solve`` runs plain relative value iteration over all state-action
  pairs and serves as the unstructured oracle.

Policy evaluation solves the gain/bias equations by relative sweeps with a
sparse exact solve as fallback; the bias is pinned to zero at the model's
reference state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order

from .errors import ConvergenceFailure, DomainError, NonConvergenceError
from .model import SystemModel

INF = math.inf
TIE_TOL = 1e-12


@dataclass
class DeterministicPolicy:
    """Dense action table over state indices, values in {0, 1}."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.uint8)
        a.setflags(write=False)
        self.actions = a

    def same_as(self, other: "DeterministicPolicy") -> bool:
        return np.array_equal(self.actions, other.actions)

    @property
    def size(self) -> int:
        return self.actions.size


@dataclass
class GainBias:
    """Solution of the fixed-policy evaluation equations.

    ``gain`` is the average cost, ``bias`` the relative value vector with
    bias[s_ref] = 0.  ``j_component`` and ``f_component`` decompose the gain
    into the error-cost part and the transmission frequency (gain ==
    j + lam * f up to round-off); they are computed by evaluating the same
    policy under the stripped-down costs, not from a stationary law.
    """

    gain: float
    bias: np.ndarray
    lam: float
    j_component: float | None = None
    f_component: float | None = None
    residual: float = float("nan")
    method: str = "sweeps"
    sweeps: int = 0


@dataclass
class ThresholdView:
    """Per-triple transmit thresholds on the impending error age.

    Keys are (x, z, theta) triples that face an error after aging; the value
    is the smallest impending error age at which the policy transmits
    (math.inf for never).  Triples whose estimate is about to change reset
    the impending age to 1, so their only expressible thresholds are 1 and
    infinity.
    """

    thresholds: dict
    delta_max: int

    def distinct(self) -> list:
        return sorted(set(self.thresholds.values()))

    def reconstruct(self, model: SystemModel) -> DeterministicPolicy:
        actions = np.zeros(model.num_mdp_states, dtype=np.uint8)
        dm = model.delta_max
        for (x, z, theta), thr in self.thresholds.items():
            if thr is INF or thr == INF:
                continue
            sl = model.triple_slice(x, z, theta)
            base = sl.start
            if model.case_same_error[base]:
                dhat = int(thr) - 1
                actions[base + dhat : base + dm + 1] = 1
            else:
                if thr <= 1:
                    actions[sl] = 1
        return DeterministicPolicy(actions)

    @staticmethod
    def from_policy(model: SystemModel, policy: DeterministicPolicy) -> "ThresholdView":
        thresholds = {}
        a = policy.actions
        dm = model.delta_max
        for x, z, theta in model.iter_triples():
            sl = model.triple_slice(x, z, theta)
            base = sl.start
            if model.idle_pinned[base]:
                if a[sl].any():
                    raise DomainError(
                        f"policy transmits at synced triple {(x, z, theta)}"
                    )
                continue
            seg = a[sl]
            ones = np.flatnonzero(seg)
            if ones.size == 0:
                thresholds[(x, z, theta)] = INF
                continue
            dhat = int(ones[0])
            if not seg[dhat:].all():
                raise DomainError(
                    f"policy is not a canonical switching policy at {(x, z, theta)}"
                )
            if model.case_same_error[base]:
                if dhat == dm:
                    # Only the saturated slot transmits; same impending age as
                    # its neighbor, not expressible as a clean threshold.
                    raise DomainError(
                        f"non-canonical cut at the truncation corner of {(x, z, theta)}"
                    )
                thresholds[(x, z, theta)] = dhat + 1
            else:
                if dhat != 0:
                    raise DomainError(
                        f"fresh-error triple {(x, z, theta)} has a delta-dependent action"
                    )
                thresholds[(x, z, theta)] = 1
        return ThresholdView(thresholds=thresholds, delta_max=dm)


def never_transmit_policy(model: SystemModel) -> DeterministicPolicy:
    return DeterministicPolicy(np.zeros(model.num_mdp_states, dtype=np.uint8))


def reactive_policy(model: SystemModel) -> DeterministicPolicy:
    """Transmit wherever a standing error persists through aging (threshold 1)."""
    return DeterministicPolicy((~model.idle_pinned).astype(np.uint8))


def induced_kernel(model: SystemModel, actions: np.ndarray) -> sp.csr_matrix:
    """Sparse one-step kernel of the chain induced by a deterministic policy."""
    s_count = model.num_mdp_states
    n = model.n_states
    idle_w = np.where(actions.astype(bool), model.p_f, 1.0)
    rows_idx = np.repeat(np.arange(s_count), n)
    data = (model.source_rows * idle_w[:, None]).ravel()
    cols = model.idle_targets.ravel()
    tx = np.flatnonzero(actions)
    if tx.size:
        rows_idx = np.concatenate([rows_idx, np.repeat(tx, n)])
        data = np.concatenate([data, (model.p_s * model.source_rows[tx]).ravel()])
        cols = np.concatenate([cols, model.succ_targets[tx].ravel()])
    kernel = sp.coo_matrix((data, (rows_idx, cols)), shape=(s_count, s_count)).tocsr()
    kernel.eliminate_zeros()
    return kernel


def reachable_set(kernel: sp.csr_matrix, start: int) -> np.ndarray:
    """Indices reachable from ``start`` (including it) on the kernel support."""
    order = breadth_first_order(kernel, start, directed=True, return_predecessors=False)
    return np.sort(order)


def _stage_costs(model: SystemModel, lam: float, actions: np.ndarray) -> np.ndarray:
    """Stacked per-state costs under the policy: rows (lam-cost, error, tx)."""
    a = actions.astype(bool)
    err = np.where(a, model.p_f * model.idle_cost, model.idle_cost)
    tx = a.astype(float)
    return np.vstack([err + lam * tx, err, tx])


def _span(x: np.ndarray) -> float:
    return float(x.max() - x.min())


def policy_evaluate(
    model: SystemModel,
    policy: DeterministicPolicy,
    lam: float,
    s_ref: int | None = None,
    v0: np.ndarray | None = None,
    components: bool = True,
    sweep_cap: int = 100_000,
    span_tol: float = 1e-12,
) -> GainBias:
    """Gain and bias of a fixed policy, bias pinned to zero at s_ref.

    Relative sweeps are the primary route; if they stall (slow mixing, or a
    policy whose induced chain splits into classes with unequal gains) the
    pinned linear system is solved sparsely, restricted to the class of
    s_ref when the full system is singular.  Raises ConvergenceFailure only
    when every route fails.
    """
    if s_ref is None:
        s_ref = model.ref_index
    a = policy.actions.astype(bool)
    n_rows = 3 if components else 1
    costs = _stage_costs(model, lam, policy.actions)[:n_rows]

    v = np.zeros((n_rows, model.num_mdp_states))
    if v0 is not None:
        v[0] = v0

    def sweep(values):
        ev_i = model.ev_idle(values)
        ev_s = model.ev_success(values)
        pv = np.where(a[None, :], model.p_f * ev_i + model.p_s * ev_s, ev_i)
        return costs + pv

    prev_tv = None
    span_window = None
    sweeps_done = 0
    converged = False
    for it in range(sweep_cap):
        tv = sweep(v)
        sweeps_done = it + 1
        if prev_tv is not None:
            spans = np.ptp(tv - prev_tv, axis=1)
            if spans.max() < span_tol:
                converged = True
                gains = tv[:, s_ref].copy()
                v = tv - gains[:, None]
                break
            if it % 500 == 499:
                worst = spans.max()
                if span_window is not None and worst > 0.99 * span_window:
                    break  # stalled; hand off to the exact solver
                span_window = worst
        prev_tv = tv
        v = tv - tv[:, s_ref][:, None]

    if converged:
        resid = _residual(model, a, costs[0], lam, gains[0], v[0])
        return GainBias(
            gain=float(gains[0]),
            bias=v[0],
            lam=lam,
            j_component=float(gains[1]) if components else None,
            f_component=float(gains[2]) if components else None,
            residual=resid,
            method="sweeps",
            sweeps=sweeps_done,
        )
    return _evaluate_exact(model, policy, lam, s_ref, costs, sweeps_done)


def _residual(model, a_bool, cost, lam, gain, bias) -> float:
    ev_i = model.ev_idle(bias)
    ev_s = model.ev_success(bias)
    pv = np.where(a_bool, model.p_f * ev_i + model.p_s * ev_s, ev_i)
    return float(np.abs(gain + bias - (cost + pv)).max())


def _evaluate_exact(model, policy, lam, s_ref, costs, sweeps_done) -> GainBias:
    """Pinned sparse solve of the evaluation equations (fallback route)."""
    s_count = model.num_mdp_states
    kernel = induced_kernel(model, policy.actions)
    a_bool = policy.actions.astype(bool)

    def solve_pinned(sub_kernel, cost_vec, ref_local):
        import warnings

        m = len(cost_vec)
        eye = sp.identity(m, format="csr")
        top = sp.hstack([eye - sub_kernel, np.ones((m, 1))], format="csr")
        pin = sp.csr_matrix(
            (np.ones(1), (np.zeros(1, dtype=int), np.array([ref_local]))),
            shape=(1, m + 1),
        )
        full = sp.vstack([top, pin], format="csc")
        rhs = np.concatenate([cost_vec, [0.0]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with np.errstate(all="ignore"):
                sol = spla.spsolve(full, rhs)
        return sol[:m], float(sol[m])

    try:
        bias, gain = solve_pinned(kernel, costs[0], s_ref)
        if not (np.all(np.isfinite(bias)) and np.isfinite(gain)):
            raise RuntimeError("singular evaluation system")
        resid = _residual(model, a_bool, costs[0], lam, gain, bias)
        if resid > 1e-8:
            raise RuntimeError(f"full-space residual {resid:.2e}")
        comps = []
        for r in range(1, costs.shape[0]):
            _, g = solve_pinned(kernel, costs[r], s_ref)
            comps.append(float(g))
        return GainBias(
            gain=float(gain),
            bias=bias,
            lam=lam,
            j_component=comps[0] if comps else None,
            f_component=comps[1] if len(comps) > 1 else None,
            residual=resid,
            method="sparse-solve",
            sweeps=sweeps_done,
        )
    except (RuntimeError, spla.MatrixRankWarning, ValueError):
        pass

    # The full system is singular or inconsistent: the policy's chain has
    # several closed classes.  Solve exactly on the class of s_ref and relax
    # the remaining states against that gain (best effort; their actions get
    # corrected by subsequent improvement steps).
    reach = reachable_set(kernel, s_ref)
    ref_local = int(np.searchsorted(reach, s_ref))
    sub = kernel[reach][:, reach]
    results = []
    for r in range(costs.shape[0]):
        try:
            bias_r, gain_r = solve_pinned(sub, costs[r][reach], ref_local)
            if not (np.all(np.isfinite(bias_r)) and np.isfinite(gain_r)):
                raise RuntimeError
        except (RuntimeError, ValueError):
            m = reach.size
            eye = sp.identity(m, format="csr")
            top = sp.hstack([eye - sub, np.ones((m, 1))], format="csr")
            pin = sp.csr_matrix(
                (np.ones(1), (np.zeros(1, dtype=int), np.array([ref_local]))),
                shape=(1, m + 1),
            )
            full = sp.vstack([top, pin], format="csr")
            rhs = np.concatenate([costs[r][reach], [0.0]])
            sol = spla.lsmr(full, rhs, atol=1e-14, btol=1e-14)[0]
            bias_r, gain_r = sol[:m], float(sol[m])
        results.append((bias_r, gain_r))

    bias = np.zeros(s_count)
    bias[reach] = results[0][0]
    gain = results[0][1]
    off = np.setdiff1d(np.arange(s_count), reach, assume_unique=False)
    if off.size:
        # Bounded relaxation for states outside the reference class.
        for _ in range(2000):
            ev_i = model.ev_idle(bias)
            ev_s = model.ev_success(bias)
            pv = np.where(a_bool, model.p_f * ev_i + model.p_s * ev_s, ev_i)
            new_off = costs[0][off] - gain + pv[off]
            delta = np.abs(new_off - bias[off]).max() if off.size else 0.0
            bias[off] = new_off
            if delta < 1e-10:
                break
    resid_reach = _residual(model, a_bool, costs[0], lam, gain, bias)
    comps = [g for _, g in results[1:]]
    return GainBias(
        gain=float(gain),
        bias=bias,
        lam=lam,
        j_component=comps[0] if comps else None,
        f_component=comps[1] if len(comps) > 1 else None,
        residual=resid_reach,
        method="class-solve",
        sweeps=sweeps_done,
    )


def _structured_improvement(
    model: SystemModel,
    lam: float,
    bias: np.ndarray,
    incumbent: np.ndarray,
    tie_tol: float = TIE_TOL,
):
    """One structured improvement pass: ascend the error-age axis per triple,
    switch to transmit at the first improving age, keep transmit above it.

    Ties fall back to the incumbent action to prevent policy cycling.
    Returns the new action table and its threshold view.
    """
    ev_i = model.ev_idle(bias)
    ev_s = model.ev_success(bias)
    q0 = model.idle_cost + ev_i
    q1 = lam + model.p_f * (model.idle_cost + ev_i) + model.p_s * ev_s
    d = q1 - q0

    actions = np.zeros(model.num_mdp_states, dtype=np.uint8)
    thresholds = {}
    dm = model.delta_max
    for x, z, theta in model.iter_triples():
        sl = model.triple_slice(x, z, theta)
        base = sl.start
        if model.idle_pinned[base]:
            continue
        seg = d[sl]
        inc = incumbent[sl]
        if model.case_same_error[base]:
            prefer = np.where(
                seg < -tie_tol, 1, np.where(seg > tie_tol, 0, inc)
            )
            ones = np.flatnonzero(prefer[:dm] == 1)
            if ones.size:
                dhat = int(ones[0])
                actions[base + dhat : base + dm + 1] = 1
                thresholds[(x, z, theta)] = dhat + 1
            else:
                thresholds[(x, z, theta)] = INF
        else:
            # The impending error age is 1 for every slot of this triple, so
            # the whole triple shares one decision.
            if seg[0] < -tie_tol:
                take = 1
            elif seg[0] > tie_tol:
                take = 0
            else:
                take = int(inc[0])
            if take:
                actions[sl] = 1
                thresholds[(x, z, theta)] = 1
            else:
                thresholds[(x, z, theta)] = INF
    return actions, ThresholdView(thresholds=thresholds, delta_max=dm)


def spi_solve(
    model: SystemModel,
    lam: float,
    policy0: DeterministicPolicy | None = None,
    v0: np.ndarray | None = None,
    max_iters: int = 500,
    tie_tol: float = TIE_TOL,
    s_ref: int | None = None,
) -> tuple[DeterministicPolicy, GainBias, ThresholdView]:
    """Structured policy iteration from the never-transmit policy.

    Alternates exact evaluation with the structured improvement pass until
    the policy is a fixed point.  Warm starts (policy0/v0) only change the
    path, not the fixed point.
    """
    if lam < 0:
        raise DomainError("transmission price must be nonnegative")
    actions = (
        policy0.actions.copy()
        if policy0 is not None
        else np.zeros(model.num_mdp_states, dtype=np.uint8)
    )
    v = v0
    view = None
    for _ in range(max_iters):
        gb = policy_evaluate(
            model, DeterministicPolicy(actions), lam, s_ref=s_ref, v0=v,
            components=False,
        )
        v = gb.bias
        new_actions, view = _structured_improvement(model, lam, v, actions, tie_tol)
        if np.array_equal(new_actions, actions):
            policy = DeterministicPolicy(actions)
            final = policy_evaluate(
                model, policy, lam, s_ref=s_ref, v0=v, components=True
            )
            return policy, final, view
        actions = new_actions
    raise NonConvergenceError(
        f"structured policy iteration did not settle within {max_iters} passes"
    )


def rvi_solve(
    model: SystemModel,
    lam: float,
    span_tol: float = 1e-10,
    max_iters: int = 10**6,
    s_ref: int | None = None,
    v0: np.ndarray | None = None,
) -> tuple[DeterministicPolicy, GainBias]:
    """Unstructured relative value iteration over all state-action pairs.

    Serves as the independent oracle for the structured solver: no policy
    class restriction, plain Bellman minimization until the span of
    successive value differences is below span_tol.
    """
    if s_ref is None:
        s_ref = model.ref_index
    c0 = model.idle_cost
    c1 = lam + model.p_f * model.idle_cost
    v = np.zeros(model.num_mdp_states) if v0 is None else v0.copy()
    prev_tv = None
    gain = float("nan")
    for it in range(max_iters):
        ev_i = model.ev_idle(v)
        ev_s = model.ev_success(v)
        q0 = c0 + ev_i
        q1 = c1 + model.p_f * ev_i + model.p_s * ev_s
        tv = np.minimum(q0, q1)
        if prev_tv is not None and _span(tv - prev_tv) < span_tol:
            gain = float(tv[s_ref])
            v = tv - gain
            break
        prev_tv = tv
        v = tv - tv[s_ref]
    else:
        raise NonConvergenceError(
            f"relative value iteration span above {span_tol} after {max_iters} sweeps"
        )
    ev_i = model.ev_idle(v)
    ev_s = model.ev_success(v)
    q0 = c0 + ev_i
    q1 = c1 + model.p_f * ev_i + model.p_s * ev_s
    actions = (q1 < q0 - TIE_TOL).astype(np.uint8)
    policy = DeterministicPolicy(actions)
    comp = policy_evaluate(model, policy, lam, s_ref=s_ref, v0=v, components=True)
    gb = GainBias(
        gain=gain,
        bias=v,
        lam=lam,
        j_component=comp.j_component,
        f_component=comp.f_component,
        residual=_span(tv - prev_tv) if prev_tv is not None else float("nan"),
        method="rvi",
        sweeps=it + 1,
    )
    return policy, gb


def check_switching_structure(policy: DeterministicPolicy, model: SystemModel) -> list:
    """Violations of the switching shape: transmit at a synced state, or an
    action that drops as the error age grows within a triple."""
    violations = []
    a = policy.actions
    for x, z, theta in model.iter_triples():
        sl = model.triple_slice(x, z, theta)
        base = sl.start
        seg = a[sl]
        if model.idle_pinned[base]:
            if seg.any():
                violations.append(
                    {"triple": (x, z, theta), "kind": "transmit-at-synced"}
                )
            continue
        if np.any(np.diff(seg.astype(np.int8)) < 0):
            violations.append({"triple": (x, z, theta), "kind": "non-monotone"})
    return violations


def check_value_monotonicity(gainbias: GainBias, model: SystemModel) -> float:
    """Largest drop of the bias along the error-age axis (theory: <= 0)."""
    dm = model.delta_max
    v = gainbias.bias.reshape(-1, dm + 1)
    running_max = np.maximum.accumulate(v, axis=1)
    return float((running_max - v).max())


def check_submodularity(model: SystemModel, gainbias: GainBias) -> float:
    """Largest violation of the transmit-advantage monotonicity in the error
    age (the Q-factor cross-difference; theory: <= 0)."""
    lam = gainbias.lam
    bias = gainbias.bias
    ev_i = model.ev_idle(bias)
    ev_s = model.ev_success(bias)
    q0 = model.idle_cost + ev_i
    q1 = lam + model.p_f * (model.idle_cost + ev_i) + model.p_s * ev_s
    d = (q1 - q0).reshape(-1, model.delta_max + 1)
    running_min = np.minimum.accumulate(d, axis=1)
    return float((d - running_min).max())
