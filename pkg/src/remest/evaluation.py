"""Exact and empirical policy evaluation.

Exact route: stationary law of the policy-induced chain restricted to the
states reachable from the reference state, then frequency and error cost as
expectations under it.  Empirical route: a seeded slot-by-slot simulator
that tracks both consecutive-error-age semantics (the truncated
estimate-reset rule the decision process uses, and the raw pair-reset rule)
so their gap is measured instead of guessed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, DomainError, SupportMismatchError
from .model import SystemModel
from .solver import (
    DeterministicPolicy,
    GainBias,
    ThresholdView,
    induced_kernel,
    reachable_set,
    spi_solve,
)

STATIONARY_TOL = 1e-14


@dataclass
class StationaryMetrics:
    """Stationary law over state indices with the derived rates."""

    mu: np.ndarray
    F: float
    J: float
    reachable: np.ndarray

    def L_at(self, lam: float) -> float:
        return self.J + lam * self.F


def _mixture_parts(policy):
    """Normalize a policy argument to (prob, actions_a, actions_b)."""
    from .constrained import MixturePolicy  # local: avoids an import cycle

    if isinstance(policy, MixturePolicy):
        return policy.p, policy.policy_minus.actions, policy.policy_plus.actions
    if isinstance(policy, DeterministicPolicy):
        return 1.0, policy.actions, policy.actions
    raise DomainError(f"unsupported policy type {type(policy).__name__}")


def stationary_metrics(model: SystemModel, policy) -> StationaryMetrics:
    """Exact frequency and error cost of a deterministic or mixture policy.

    The stationary law is found by power iteration on the induced kernel
    restricted to the class reachable from the reference state, with an
    exact linear solve as fallback; unreachable product states carry zero
    mass.
    """
    p, act_minus, act_plus = _mixture_parts(policy)
    kernel = induced_kernel(model, act_minus)
    if act_plus is not act_minus:
        kernel = p * kernel + (1.0 - p) * induced_kernel(model, act_plus)
        kernel = sp.csr_matrix(kernel)
        kernel.eliminate_zeros()
    reach = reachable_set(kernel, model.ref_index)
    sub = sp.csr_matrix(kernel[reach][:, reach])

    mu_sub = _stationary_of(sub)
    mu = np.zeros(model.num_mdp_states)
    mu[reach] = mu_sub

    tx_rate = p * act_minus + (1.0 - p) * act_plus
    err_cost = (
        p * np.where(act_minus.astype(bool), model.p_f, 1.0)
        + (1.0 - p) * np.where(act_plus.astype(bool), model.p_f, 1.0)
    ) * model.idle_cost
    f = float(mu @ tx_rate)
    j = float(mu @ err_cost)
    return StationaryMetrics(mu=mu, F=f, J=j, reachable=reach)


def _stationary_of(kernel: sp.csr_matrix, max_iter: int = 200_000) -> np.ndarray:
    m = kernel.shape[0]
    mu = np.full(m, 1.0 / m)
    kt = kernel.T.tocsr()
    for _ in range(max_iter):
        nxt = kt @ mu
        s = nxt.sum()
        if s <= 0:
            break
        nxt /= s
        if np.abs(nxt - mu).max() < STATIONARY_TOL:
            mu = nxt
            resid = np.abs(kt @ mu - mu).max()
            if resid < 1e-10:
                return np.clip(mu, 0.0, None)
            break
        mu = nxt
    # Fallback: replace one balance equation with the normalization.
    a = (kt - sp.identity(m, format="csr")).tolil()
    a[0, :] = 1.0
    b = np.zeros(m)
    b[0] = 1.0
    try:
        mu = spla.spsolve(a.tocsc(), b)
    except RuntimeError as exc:
        raise ConvergenceFailure(f"stationary law solve failed: {exc}") from exc
    if not np.all(np.isfinite(mu)):
        raise ConvergenceFailure("stationary law solve returned non-finite mass")
    mu = np.clip(mu, 0.0, None)
    total = mu.sum()
    if total <= 0:
        raise ConvergenceFailure("stationary law has no mass")
    return mu / total


@dataclass
class SolveOutcome:
    """One point of the price sweep: price, gain, its (J, F) split, policy."""

    lam: float
    gain: float
    J: float
    F: float
    policy: DeterministicPolicy | None
    view: ThresholdView | None
    gainbias: GainBias | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return self.J + self.lam * self.F


def sweep_lambda(model: SystemModel, lambda_grid) -> list[SolveOutcome]:
    """Solve the relaxed problem along an ascending price grid.

    Each solve warm-starts from the previous policy; per-point failures are
    recorded in the outcome's diagnostics and the sweep continues.
    """
    grid = [float(l) for l in lambda_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("lambda grid must be sorted ascending")
    outcomes = []
    policy0 = None
    v0 = None
    for lam in grid:
        try:
            policy, gb, view = spi_solve(model, lam, policy0=policy0, v0=v0)
            metrics = stationary_metrics(model, policy)
            outcomes.append(
                SolveOutcome(
                    lam=lam,
                    gain=gb.gain,
                    J=metrics.J,
                    F=metrics.F,
                    policy=policy,
                    view=view,
                    gainbias=gb,
                    diagnostics={"sweeps": gb.sweeps, "method": gb.method},
                )
            )
            policy0, v0 = policy, gb.bias
        except Exception as exc:  # noqa: BLE001 - per-point isolation is the contract
            outcomes.append(
                SolveOutcome(
                    lam=lam, gain=float("nan"), J=float("nan"), F=float("nan"),
                    policy=None, view=None, gainbias=None,
                    diagnostics={"error": f"{type(exc).__name__}: {exc}"},
                )
            )
    return outcomes


def kl_truncation(
    config,
    theta_ref: int,
    delta_ref: int,
    theta_small: int,
    delta_small: int,
    infinite_on_mismatch: bool = False,
) -> float:
    """Information loss of solving at a smaller truncation.

    Solves the constrained problem at both truncations, projects the
    reference stationary law onto the small state space by aggregating all
    saturated ages into the truncation boundary, and returns the divergence
    of the small law from the projection.  No smoothing: mass on states the
    projection never visits raises SupportMismatchError, or returns
    math.inf (the divergence of mutually singular laws) when
    infinite_on_mismatch is set.
    """
    from .constrained import solve_cmdp  # local: avoids an import cycle

    if theta_small > theta_ref or delta_small > delta_ref:
        raise DomainError("small truncation must not exceed the reference")

    def solved_mu(theta_max, delta_max):
        cfg = config.with_overrides(theta_max=theta_max, delta_max=delta_max)
        model = cfg.build_model()
        solution = solve_cmdp(
            model, cfg.f_max, cfg.lambda_max, cfg.tolerances.mixture
        )
        return model, stationary_metrics(model, solution.policy).mu

    model_ref, mu_ref = solved_mu(theta_ref, delta_ref)
    model_small, mu_small = solved_mu(theta_small, delta_small)

    proj = np.zeros(model_small.num_mdp_states)
    tgt = model_small.encode(
        model_ref.x_of,
        model_ref.z_of,
        np.minimum(model_ref.theta_of, theta_small),
        np.minimum(model_ref.delta_of, delta_small),
    )
    np.add.at(proj, tgt, mu_ref)

    support = mu_small > 0
    missing = np.flatnonzero(support & (proj <= 0))
    if missing.size:
        if infinite_on_mismatch:
            return float("inf")
        states = [model_small.decode(int(i)) for i in missing[:8]]
        raise SupportMismatchError(
            f"{missing.size} truncated states carry mass the reference never visits",
            states=states,
        )
    kl = float(np.sum(mu_small[support] * np.log(mu_small[support] / proj[support])))
    return max(kl, 0.0)


@dataclass
class SimReport:
    """Empirical rates from one seeded run, with batch-means standard errors.

    empirical_J_model follows the truncated estimate-reset error age (the
    exact mirror of the decision process); empirical_J_strict follows the
    raw pair-reset rule without truncation.
    """

    horizon: int
    seed: int
    empirical_F: float
    empirical_J_model: float
    empirical_J_strict: float
    se_F: float
    se_J_model: float
    se_J_strict: float
    channel_success_rate: float
    transmissions: int
    n_batches: int

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "empirical_F": self.empirical_F,
            "empirical_J_model": self.empirical_J_model,
            "empirical_J_strict": self.empirical_J_strict,
            "se_F": self.se_F,
            "se_J_model": self.se_J_model,
            "se_J_strict": self.se_J_strict,
            "channel_success_rate": self.channel_success_rate,
            "transmissions": self.transmissions,
            "n_batches": self.n_batches,
        }


def simulate(model: SystemModel, policy, horizon: int, seed: int) -> SimReport:
    """Seeded slot-by-slot run of source, channel, policy and receiver.

    Three independent named streams (source, channel, mixture coin) are
    spawned from the seed so that changing the policy never perturbs the
    source path.  Bit-reproducible for a fixed seed.
    """
    if horizon < 10**4:
        raise DomainError("horizon must be at least 10^4")
    p, act_minus, act_plus = _mixture_parts(policy)
    mixed = act_plus is not act_minus

    src_ss, ch_ss, coin_ss = np.random.SeedSequence(seed).spawn(3)
    rng_src = np.random.default_rng(src_ss)
    rng_ch = np.random.default_rng(ch_ss)
    rng_coin = np.random.default_rng(coin_ss)

    u_src = rng_src.random(horizon)
    u_ch = rng_ch.random(horizon)
    u_coin = rng_coin.random(horizon) if mixed else None

    cum_rows = np.cumsum(model.chain.rows, axis=1)
    table = model.estimates.table
    tm, dm = model.theta_max, model.delta_max
    rho_trunc = model.rho_values
    rho_fn = model.rho.value
    dist = model.distortion
    p_s = model.p_s

    xstar = model.chain.stationary().argmax()
    x = xstar
    z, theta = xstar, tm
    delta_model = 0
    x_prev, xhat_prev = xstar, xstar
    delta_strict = 0

    n_batches = 50
    batch_len = horizon // n_batches
    used = batch_len * n_batches
    cost_m = np.zeros(used)
    cost_s = np.zeros(used)
    tx_flag = np.zeros(used)
    tx_total = 0
    ch_success = 0

    encode = model.encode
    for t in range(used):
        s_idx = int(encode(x, z, theta, delta_model))
        if mixed:
            acts = act_minus if u_coin[t] < p else act_plus
        else:
            acts = act_minus
        u = int(acts[s_idx])
        success = False
        if u:
            tx_total += 1
            success = u_ch[t] < p_s
            if success:
                ch_success += 1
        if success:
            z, theta = x, 0
        else:
            theta = min(theta + 1, tm)
        xhat = int(table[z, theta])

        if xhat == x:
            delta_model = 0
        elif xhat == xhat_prev:
            delta_model = min(delta_model + 1, dm)
        else:
            delta_model = 1
        if xhat == x:
            delta_strict = 0
        elif (x, xhat) == (x_prev, xhat_prev):
            delta_strict += 1
        else:
            delta_strict = 1

        d_xhat = dist[x, xhat]
        cost_m[t] = d_xhat * rho_trunc[delta_model]
        cost_s[t] = d_xhat * (
            rho_trunc[delta_strict] if delta_strict <= dm else rho_fn(delta_strict)
        )
        tx_flag[t] = u

        x_prev, xhat_prev = x, xhat
        x = int(np.searchsorted(cum_rows[x], u_src[t], side="right"))
        if x >= model.n_states:
            x = model.n_states - 1

    def batch_stats(series):
        means = series.reshape(n_batches, batch_len).mean(axis=1)
        return float(series.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))

    f_mean, f_se = batch_stats(tx_flag)
    jm_mean, jm_se = batch_stats(cost_m)
    js_mean, js_se = batch_stats(cost_s)
    return SimReport(
        horizon=used,
        seed=seed,
        empirical_F=f_mean,
        empirical_J_model=jm_mean,
        empirical_J_strict=js_mean,
        se_F=f_se,
        se_J_model=jm_se,
        se_J_strict=js_se,
        channel_success_rate=ch_success / tx_total if tx_total else float("nan"),
        transmissions=tx_total,
        n_batches=n_batches,
    )
