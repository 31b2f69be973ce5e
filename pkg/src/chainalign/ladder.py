"""Karlin-Dembo constants of the score walk, estimated by simulation.

The additive score process drops below its running minimum at the
descending ladder epochs; the invariant law nu of the states seen there,
the mean inter-ladder time mu_minus, and the per-state tail constants
e(x, y) of the pre-ruin maximum combine into the Gumbel prefactor K*.
Tail probabilities are exponentially rare and are estimated by
importance sampling under the tilted chain with likelihood-ratio
weights; a naive estimator is kept behind a flag as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConvergenceFailure, InsufficientReplicates, SeedRequired
from .model import ScoreModel, _readonly, _stationary_vector
from .spectral import TiltedModel

_MASK64 = (1 << 64) - 1
_PURPOSE_LADDER = 1
_PURPOSE_TAIL = 2
_PURPOSE_NAIVE = 3
_PURPOSE_RENEWAL = 4
_BLOCK = 1 << 20
TAU_HIST_CAP = 1 << 10


def _philox(seed: int, purpose: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, purpose & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step_score_matrix(model: ScoreModel) -> np.ndarray:
    """(E^2, E^2) per-transition score: pair scores depend on the
    destination state only."""
    E = model.alphabet_size
    if model.is_transition:
        return np.ascontiguousarray(model.score.table.reshape(E * E, E * E))
    flat = model.score.table.reshape(E * E)
    return np.ascontiguousarray(np.broadcast_to(flat[None, :], (E * E, E * E)).copy())


def pair_chain_cum(model: ScoreModel) -> np.ndarray:
    """Cumulative transition rows of the product chain on E^2 states."""
    E = model.alphabet_size
    W = (model.P[:, None, :, None] * model.Q[None, :, None, :]).reshape(E * E, E * E)
    c = np.cumsum(W, axis=1)
    c[:, -1] = 1.0
    return np.ascontiguousarray(c)


def tilted_chain_cum(tilted: TiltedModel) -> np.ndarray:
    c = np.cumsum(tilted.R_star, axis=1)
    c[:, -1] = 1.0
    return np.ascontiguousarray(c)


@dataclass(frozen=True)
class LadderStats:
    """Simulation estimates of nu, mu_minus, e(x,y) and K*."""

    nu: np.ndarray  # (E^2,)
    nu_stderr: np.ndarray
    nu_alt: np.ndarray  # invariant vector of the empirical ladder transition matrix
    mu_minus: float
    mu_minus_stderr: float
    mean_drop: float  # E_nu(S at the ladder epoch), negative
    mean_drop_stderr: float
    e_table: np.ndarray  # (E^2,)
    e_stderr: np.ndarray
    K_star: float
    K_star_stderr: float
    u_grid: np.ndarray
    e_curves: np.ndarray  # (E^2, len(u_grid)) estimates of P(max > u) e^(theta u)
    e_curve_stderr: np.ndarray
    tau_hist: np.ndarray
    n_cycles: int
    n_steps: int
    tail_reps: int
    burn_in: int
    seed: int
    mu: float
    theta_star: float
    naive_curves: np.ndarray | None = None
    naive_stderr: np.ndarray | None = None

    @property
    def wald_mu_minus(self) -> float:
        """Independent route to mu_minus through the stopping identity
        E(S at the epoch) = mu * E(epoch length)."""
        return self.mean_drop / self.mu

    @property
    def stderr(self) -> dict:
        return {
            "nu": self.nu_stderr,
            "mu_minus": self.mu_minus_stderr,
            "mean_drop": self.mean_drop_stderr,
            "e_table": self.e_stderr,
            "K_star": self.K_star_stderr,
        }


@dataclass(frozen=True)
class GumbelParams:
    """Everything needed to normalise scores and set thresholds."""

    theta_star: float
    K_star: float
    lattice: bool
    K_star_stderr: float = 0.0

    def t_n(self, n_x: int, n_y: int | None = None, x: float = 0.0) -> float:
        if n_y is None:
            n_y = n_x
        return (math.log(self.K_star) + math.log(float(n_x) * float(n_y)) + x) / self.theta_star

    def x_n(self, t_n: float) -> float:
        if not self.lattice:
            return 0.0
        return self.theta_star * (t_n - math.floor(t_n))

    def threshold(self, t_n: float) -> float:
        """The comparison level actually used: integer scores compare
        against floor(t_n), which changes nothing for lattice peaks."""
        return float(math.floor(t_n)) if self.lattice else t_n


def _run_ladder_batches(
    model: ScoreModel, seed: int, n_cycles: int, batches: int, burn_in: int
):
    cum = pair_chain_cum(model)
    score = step_score_matrix(model)
    n_states = cum.shape[0]
    rng = _philox(seed, _PURPOSE_LADDER)

    state = (0, 0.0, 0, -1)  # s, excess, dt, prev ladder state

    def run(cycles_target):
        nonlocal state
        s, e, dt, prev = state
        counts = np.zeros(n_states, np.int64)
        trans = np.zeros((n_states, n_states), np.int64)
        tau_hist = np.zeros(TAU_HIST_CAP, np.int64)
        sum_dt = sum_dt2 = sum_drop = sum_drop2 = 0.0
        done = 0
        steps = 0
        while done < cycles_target:
            u = rng.random(_BLOCK)
            (used, ncyc, s, e, dt, prev, c, tr, sdt, sdt2, sdr, sdr2, th, st) = (
                _kernels.ladder_kernel(cum, score, u, s, e, dt, prev, cycles_target - done, TAU_HIST_CAP)
            )
            counts += c
            trans += tr
            tau_hist += th
            sum_dt += sdt
            sum_dt2 += sdt2
            sum_drop += sdr
            sum_drop2 += sdr2
            done += ncyc
            steps += st
        state = (s, e, dt, prev)
        return counts, trans, tau_hist, sum_dt, sum_drop, done, steps

    run(burn_in)  # discard

    per = max(n_cycles // batches, 1)
    nus, mus, drops = [], [], []
    counts_all = np.zeros(n_states, np.int64)
    trans_all = np.zeros((n_states, n_states), np.int64)
    tau_all = np.zeros(TAU_HIST_CAP, np.int64)
    steps_all = 0
    cycles_all = 0
    for _ in range(batches):
        counts, trans, tau, sdt, sdrop, done, steps = run(per)
        nus.append(counts / done)
        mus.append(sdt / done)
        drops.append(sdrop / done)
        counts_all += counts
        trans_all += trans
        tau_all += tau
        steps_all += steps
        cycles_all += done
    nus = np.array(nus)
    mus = np.array(mus)
    drops = np.array(drops)
    nu = counts_all / cycles_all
    nu_se = nus.std(axis=0, ddof=1) / math.sqrt(batches)
    mu_minus = float(mus.mean())
    mu_minus_se = float(mus.std(ddof=1) / math.sqrt(batches))
    mean_drop = float(drops.mean())
    mean_drop_se = float(drops.std(ddof=1) / math.sqrt(batches))
    rows = trans_all.sum(axis=1, keepdims=True)
    if np.any(rows == 0):
        # unvisited ladder states: fall back to the empirical frequencies
        nu_alt = nu.copy()
    else:
        try:
            nu_alt = _stationary_vector(trans_all / rows)
        except ConvergenceFailure:  # degenerate empirical support
            nu_alt = nu.copy()
    return (
        nu, nu_se, nu_alt, mu_minus, mu_minus_se, mean_drop, mean_drop_se,
        trans_all, tau_all, cycles_all, steps_all,
    )


def default_u_grid(model: ScoreModel, theta_star: float, points: int = 48) -> np.ndarray:
    """Levels for the tail-constant limit; integer levels 1..ceil(25/theta*)
    on the lattice, an even grid over the same span otherwise."""
    u_max = 25.0 / theta_star
    if model.lattice:
        return np.arange(1.0, math.ceil(u_max) + 1.0)
    return np.linspace(u_max / points, u_max, points)


def _tail_curves_tilted(
    model: ScoreModel,
    tilted: TiltedModel,
    u_grid: np.ndarray,
    tail_reps: int,
    seed: int,
    batches: int,
):
    cum = tilted_chain_cum(tilted)
    score = step_score_matrix(model)
    n_states = cum.shape[0]
    K = u_grid.size
    theta = tilted.theta_star
    r_vec = np.ascontiguousarray(tilted.r_star)
    growth = np.exp(theta * u_grid)

    curves = np.zeros((n_states, K))
    curve_se = np.zeros((n_states, K))
    per = max(tail_reps // batches, 1)
    total = per * batches
    for s0 in range(n_states):
        batch_vals = np.zeros((batches, K))
        w_all = np.zeros(K)
        w2_all = np.zeros(K)
        for b in range(batches):
            rng = _philox(seed, (_PURPOSE_TAIL << 56) | (s0 << 32) | b)
            w_sum = np.zeros(K)
            w2_sum = np.zeros(K)
            ncompl = 0
            carry = (0, 0.0, 0.0, 0, 0)
            while ncompl < per:
                u = rng.random(_BLOCK)
                nc, used, it, S, hi, s, nu_ = _kernels.tail_tilted_kernel(
                    cum, score, r_vec, theta, s0, u_grid, u, per - ncompl,
                    carry[0], carry[1], carry[2], carry[3], carry[4],
                    w_sum, w2_sum,
                )
                carry = (it, S, hi, s, nu_)
                ncompl += nc
            batch_vals[b] = w_sum / per * growth
            w_all += w_sum
            w2_all += w2_sum
        curves[s0] = w_all / total * growth
        curve_se[s0] = batch_vals.std(axis=0, ddof=1) / math.sqrt(batches)
    return curves, curve_se, total


def _tail_curves_naive(
    model: ScoreModel, theta_star: float, u_grid: np.ndarray, tail_reps: int, seed: int
):
    cum = pair_chain_cum(model)
    score = step_score_matrix(model)
    n_states = cum.shape[0]
    K = u_grid.size
    growth = np.exp(theta_star * u_grid)
    curves = np.zeros((n_states, K))
    stderr = np.zeros((n_states, K))
    for s0 in range(n_states):
        rng = _philox(seed, (_PURPOSE_NAIVE << 56) | (s0 << 32))
        cnt = np.zeros(K, np.int64)
        ncompl = 0
        carry = (0, 0.0, 0.0, 0)
        while ncompl < tail_reps:
            u = rng.random(_BLOCK)
            nc, used, it, S, hi, s = _kernels.tail_naive_kernel(
                cum, score, s0, u_grid, u, tail_reps - ncompl,
                carry[0], carry[1], carry[2], carry[3], cnt
            )
            carry = (it, S, hi, s)
            ncompl += nc
        p = cnt / ncompl
        curves[s0] = p * growth
        stderr[s0] = np.sqrt(p * (1 - p) / ncompl) * growth
    return curves, stderr


def _plateau(u_grid: np.ndarray, curve: np.ndarray, se: np.ndarray) -> tuple[float, float]:
    """Inverse-variance mean over the upper half of the level grid."""
    K = u_grid.size
    lo = K // 2
    vals = curve[lo:]
    errs = se[lo:]
    ok = errs > 0
    if not np.any(ok):
        return float(vals.mean()), 0.0
    w = 1.0 / errs[ok] ** 2
    est = float(np.sum(w * vals[ok]) / np.sum(w))
    se_est = float(math.sqrt(1.0 / np.sum(w)))
    return est, se_est


def simulate_ladder(
    model: ScoreModel,
    tilted: TiltedModel,
    n_cycles: int,
    seed: int | None,
    *,
    tail_reps: int = 50_000,
    batches: int = 16,
    burn_in: int = 1000,
    u_grid: np.ndarray | None = None,
    naive_check: bool = False,
    stderr_cap: float | None = None,
) -> LadderStats:
    """Estimate nu, mu_minus, e(x,y) and K* from seeded simulation.

    ``n_cycles`` counts ladder cycles for the nu / mu_minus estimates
    (after burn-in); ``tail_reps`` counts importance-sampling
    trajectories per start state for the tail constants. ``stderr_cap``
    (relative, on K*) raises InsufficientReplicates when exceeded.
    """
    if seed is None:
        raise SeedRequired("ladder simulation needs an explicit seed")
    if n_cycles <= 0 or tail_reps <= 0:
        raise ValueError("n_cycles and tail_reps must be positive")

    (
        nu, nu_se, nu_alt, mu_minus, mu_minus_se, mean_drop, mean_drop_se,
        trans, tau_hist, cycles, steps,
    ) = _run_ladder_batches(model, seed, n_cycles, batches, burn_in)

    if u_grid is None:
        u_grid = default_u_grid(model, tilted.theta_star)
    u_grid = np.ascontiguousarray(u_grid, dtype=np.float64)
    curves, curve_se, tail_total = _tail_curves_tilted(
        model, tilted, u_grid, tail_reps, seed, batches=min(batches, 10)
    )
    n_states = curves.shape[0]
    e_table = np.zeros(n_states)
    e_se = np.zeros(n_states)
    for s0 in range(n_states):
        e_table[s0], e_se[s0] = _plateau(u_grid, curves[s0], curve_se[s0])

    A = float(nu @ e_table)
    K_star = A / mu_minus
    # delta method, diagonal terms
    var = (
        float(np.sum((nu / mu_minus) ** 2 * e_se**2))
        + float(np.sum((e_table / mu_minus) ** 2 * nu_se**2))
        + (A / mu_minus**2) ** 2 * mu_minus_se**2
    )
    K_se = math.sqrt(var)
    if stderr_cap is not None and K_se > stderr_cap * K_star:
        raise InsufficientReplicates(
            f"relative K* stderr {K_se / K_star:.3g} exceeds the cap {stderr_cap:g}"
        )

    naive_curves = naive_se = None
    if naive_check:
        naive_curves, naive_se = _tail_curves_naive(
            model, tilted.theta_star, u_grid, tail_reps, seed
        )

    return LadderStats(
        nu=_readonly(nu),
        nu_stderr=_readonly(nu_se),
        nu_alt=_readonly(nu_alt),
        mu_minus=mu_minus,
        mu_minus_stderr=mu_minus_se,
        mean_drop=mean_drop,
        mean_drop_stderr=mean_drop_se,
        e_table=_readonly(e_table),
        e_stderr=_readonly(e_se),
        K_star=K_star,
        K_star_stderr=K_se,
        u_grid=_readonly(u_grid),
        e_curves=_readonly(curves),
        e_curve_stderr=_readonly(curve_se),
        tau_hist=_readonly(tau_hist),
        n_cycles=cycles,
        n_steps=steps,
        tail_reps=tail_total,
        burn_in=burn_in,
        seed=seed,
        mu=tilted.stat.mu,
        theta_star=tilted.theta_star,
        naive_curves=None if naive_curves is None else _readonly(naive_curves),
        naive_stderr=None if naive_se is None else _readonly(naive_se),
    )


def renewal_frequencies(
    model: ScoreModel, n_steps: int, seed: int | None, batches: int = 16
):
    """Empirical per-step frequency of (walk at a new minimum, state):
    the renewal-theorem left side, from a fresh stream.

    Returns (freq (E^2,), stderr (E^2,))."""
    if seed is None:
        raise SeedRequired("renewal check needs an explicit seed")
    cum = pair_chain_cum(model)
    score = step_score_matrix(model)
    n_states = cum.shape[0]
    rng = _philox(seed, _PURPOSE_RENEWAL)
    per = max(n_steps // batches, 1)
    freqs = np.zeros((batches, n_states))
    state = (0, 0.0, 0, -1)
    for b in range(batches):
        counts = np.zeros(n_states, np.int64)
        steps = 0
        s, e, dt, prev = state
        while steps < per:
            u = rng.random(min(_BLOCK, per - steps))
            (used, ncyc, s, e, dt, prev, c, _tr, *_rest) = _kernels.ladder_kernel(
                cum, score, u, s, e, dt, prev, 1 << 62, TAU_HIST_CAP
            )
            counts += c
            steps += used
        state = (s, e, dt, prev)
        freqs[b] = counts / steps
    freq = freqs.mean(axis=0)
    se = freqs.std(axis=0, ddof=1) / math.sqrt(batches)
    return freq, se


def gumbel_params(tilted: TiltedModel, ladder: LadderStats) -> GumbelParams:
    """Package the tilt and the simulated prefactor."""
    return GumbelParams(
        theta_star=tilted.theta_star,
        K_star=ladder.K_star,
        lattice=tilted.model.lattice,
        K_star_stderr=ladder.K_star_stderr,
    )


def normalize_score(
    params: GumbelParams, s: float, n_x: int, n_y: int
) -> tuple[float, float]:
    """Normalised score s' and its Gumbel p-value.

    Integer-valued scores are lattice points: the p-value is evaluated at
    floor(s), which is where the discrete distribution actually sits.
    """
    logkn = math.log(params.K_star) + math.log(float(n_x) * float(n_y))
    s_prime = params.theta_star * s - logkn
    s_eff = math.floor(s) if params.lattice else s
    sp_eff = params.theta_star * s_eff - logkn
    p = -math.expm1(-math.exp(-sp_eff))
    return s_prime, min(max(p, 0.0), 1.0)
