"""Probabilistic model: alphabet, two Markov chains, score function.

Validates stochasticity, irreducibility, aperiodicity and the score
lattice, computes stationary laws and the drift, and checks the two
cycle regularity conditions (existence of a positive-score cycle pair,
and the shift condition) that the limit theory requires.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceFailure,
    GcdNotOne,
    ModelError,
    NonStochasticRow,
    Periodic,
    Reducible,
)

ROW_SUM_TOL = 1e-9
STATIONARY_TOL = 1e-13
STATIONARY_MAX_ITER = 200_000


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PairScore:
    """Per-position score f(x, y) as an |E| x |E| table."""

    table: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.table


@dataclass(frozen=True)
class TransitionScore:
    """Pair-transition score f(x, y, x', y') as an |E|^2 x |E|^2 table,
    stored with shape (E, E, E, E) indexed [x, y, x', y']."""

    table: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.table


@dataclass(frozen=True)
class ScoreModel:
    """Validated model: two transition matrices and a score function.

    ``score_divisor`` records the gcd the integer score table was divided
    by during validation (1 if untouched); thresholds computed for the
    rescaled model refer to score units of the rescaled table.
    """

    alphabet_size: int
    P: np.ndarray
    Q: np.ndarray
    score: PairScore | TransitionScore
    lattice: bool
    score_divisor: int = 1
    symbols: tuple[str, ...] | None = None

    @property
    def is_transition(self) -> bool:
        return isinstance(self.score, TransitionScore)

    @property
    def is_iid(self) -> bool:
        return bool(
            np.all(self.P == self.P[0][None, :]) and np.all(self.Q == self.Q[0][None, :])
        )

    def table4(self) -> np.ndarray:
        """Score as a function of the pair transition (x,y) -> (x',y')."""
        E = self.alphabet_size
        if self.is_transition:
            return self.score.table
        return _readonly(np.broadcast_to(self.score.table[None, None, :, :], (E, E, E, E)).copy())

    def max_abs_score(self) -> float:
        return float(np.max(np.abs(self.score.table)))


@dataclass(frozen=True)
class StationaryInfo:
    """Stationary laws of both chains, their product, and the drift mu."""

    pi_P: np.ndarray
    pi_Q: np.ndarray
    pi: np.ndarray  # shape (E, E), outer product
    mu: float


@dataclass(frozen=True)
class CycleWitness:
    """A pair of equal-length cycles with positive total score."""

    x_cycle: tuple[int, ...]
    y_cycle: tuple[int, ...]
    total_score: float
    max_mean: float


@dataclass(frozen=True)
class ShiftWitness:
    x_cycle: tuple[int, ...]
    y_cycle: tuple[int, ...]
    plain_sum: float
    shifted_sum: float


@dataclass(frozen=True)
class ShiftReport:
    """Best-effort diagnostics for the shift condition; never a hard gate."""

    found: dict[int, ShiftWitness | None] = field(default_factory=dict)
    additive_form: bool | None = None
    strictly_positive: bool = False

    def witness_found(self, T: int) -> bool:
        return self.found.get(T) is not None


# ---------------------------------------------------------------------------
# graph checks


def _reachability(adj: np.ndarray) -> np.ndarray:
    """Boolean transitive closure (states reachable in >= 1 step)."""
    n = adj.shape[0]
    reach = adj.copy()
    for _ in range(int(math.ceil(math.log2(max(n, 2)))) + 1):
        new = reach | (reach @ reach)
        if np.array_equal(new, reach):
            break
        reach = new
    return reach


def _is_irreducible(adj: np.ndarray) -> bool:
    return bool(np.all(_reachability(adj)))


def _period(adj: np.ndarray) -> int:
    """Period of an irreducible chain: gcd of closed-walk lengths through
    state 0, from BFS levels (gcd of level[u] + 1 - level[v] over edges)."""
    n = adj.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    us, vs = np.nonzero(adj)
    for u, v in zip(us, vs):
        g = math.gcd(g, int(level[u]) + 1 - int(level[v]))
    return abs(g) if g != 0 else 0


def _check_chain(M: np.ndarray, name: str, violations: list) -> np.ndarray | None:
    """Validate one transition matrix; return the renormalized matrix."""
    if np.any(M < 0):
        violations.append(NonStochasticRow(f"{name} has negative entries"))
        return None
    sums = M.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        violations.append(
            NonStochasticRow(f"{name} rows {bad.tolist()} sum to {sums[bad].tolist()}, not 1")
        )
        return None
    M = M / sums[:, None]
    adj = M > 0
    if not _is_irreducible(adj):
        violations.append(Reducible(f"{name} is reducible"))
        return None
    p = _period(adj)
    if p != 1:
        violations.append(Periodic(f"{name} has period {p}"))
        return None
    return M


def _support_edges4(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Boolean (E,E,E,E) mask of product-chain transitions with positive
    probability, indexed [x, y, x', y']."""
    return (P > 0)[:, None, :, None] & (Q > 0)[None, :, None, :]


def _score_gcd(model_values: np.ndarray, mask: np.ndarray) -> int:
    vals = np.asarray(model_values)[mask]
    g = 0
    for v in vals:
        iv = int(round(float(v)))
        g = math.gcd(g, abs(iv))
        if g == 1:
            break
    return g


def validate_model(
    alphabet_size: int,
    P,
    Q,
    score,
    *,
    transition: bool = False,
    lattice: bool | None = None,
    symbols: tuple[str, ...] | None = None,
) -> ScoreModel:
    """Validate raw inputs and build a ScoreModel.

    Raises ModelError carrying every violated invariant. Integer score
    tables with gcd > 1 are rescaled by the gcd (GcdNotOne warning).
    """
    violations: list = []
    E = int(alphabet_size)
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    tab = np.asarray(score, dtype=float)

    if P.shape != (E, E) or Q.shape != (E, E):
        raise ModelError([NonStochasticRow(f"P/Q must be {E}x{E}, got {P.shape} and {Q.shape}")])
    want = (E, E, E, E) if transition else (E, E)
    if tab.shape != want:
        raise ModelError([NonStochasticRow(f"score table must have shape {want}, got {tab.shape}")])
    if not np.all(np.isfinite(tab)):
        violations.append(NonStochasticRow("score table has non-finite entries"))

    Pn = _check_chain(P, "P", violations)
    Qn = _check_chain(Q, "Q", violations)
    if violations:
        raise ModelError(violations)

    if transition:
        relevant = _support_edges4(Pn, Qn)
    else:
        relevant = np.ones((E, E), dtype=bool)
    rel_vals = tab[relevant]
    integral = bool(np.all(rel_vals == np.round(rel_vals)))
    if lattice is None:
        lattice = integral
    elif lattice and not integral:
        raise ModelError([NonStochasticRow("lattice=True but score values are not integers")])

    divisor = 1
    if lattice:
        g = _score_gcd(tab, relevant)
        if g > 1:
            warnings.warn(
                f"score gcd is {g}; table rescaled by 1/{g} so the minimal lattice is Z "
                f"(thresholds t_n are in rescaled score units)",
                GcdNotOne,
            )
            tab = tab / g
            divisor = g

    score_obj = TransitionScore(_readonly(tab)) if transition else PairScore(_readonly(tab))
    return ScoreModel(
        alphabet_size=E,
        P=_readonly(Pn),
        Q=_readonly(Qn),
        score=score_obj,
        lattice=bool(lattice),
        score_divisor=divisor,
        symbols=tuple(symbols) if symbols is not None else None,
    )


# ---------------------------------------------------------------------------
# stationary laws


def _stationary_vector(M: np.ndarray) -> np.ndarray:
    """Left-invariant probability vector by power iteration."""
    n = M.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(STATIONARY_MAX_ITER):
        nxt = pi @ M
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < STATIONARY_TOL:
            # one extra sweep so the residual, not just the step, is small
            pi = nxt @ M
            return pi / pi.sum()
        pi = nxt
    raise ConvergenceFailure("stationary distribution power iteration hit the iteration cap")


def stationary(model: ScoreModel) -> StationaryInfo:
    """Stationary laws pi_P, pi_Q, their product, and the drift mu = pi(f)."""
    pi_P = _stationary_vector(model.P)
    pi_Q = _stationary_vector(model.Q)
    pi = np.outer(pi_P, pi_Q)
    if model.is_transition:
        # mean of f(X1,Y1,X2,Y2) under the stationary product chain
        w = pi[:, :, None, None] * model.P[:, None, :, None] * model.Q[None, :, None, :]
        mu = float(np.sum(w * model.score.table))
    else:
        mu = float(np.sum(pi * model.score.table))
    return StationaryInfo(pi_P=_readonly(pi_P), pi_Q=_readonly(pi_Q), pi=_readonly(pi), mu=mu)


# ---------------------------------------------------------------------------
# condition: positive cycle pair (max mean cycle on the product chain)


def _product_graph(model: ScoreModel):
    """Edges and weights of the product chain on E^2 nodes (x*E + y)."""
    E = model.alphabet_size
    mask = _support_edges4(model.P, model.Q)
    f4 = model.table4()
    xs, ys, xps, yps = np.nonzero(mask)
    u = xs * E + ys
    v = xps * E + yps
    w = f4[xs, ys, xps, yps]
    return u.astype(np.int64), v.astype(np.int64), w.astype(float), E * E


def _karp_max_mean(u, v, w, n_nodes):
    """Karp's maximum mean cycle value on a strongly connected graph."""
    NEG = -np.inf
    D = np.full((n_nodes + 1, n_nodes), NEG)
    D[0, :] = 0.0
    for k in range(1, n_nodes + 1):
        np.maximum.at(D[k], v, D[k - 1][u] + w)
    best = -np.inf
    Dn = D[n_nodes]
    for x in range(n_nodes):
        if not np.isfinite(Dn[x]):
            continue
        worst = np.inf
        for k in range(n_nodes):
            if np.isfinite(D[k, x]):
                worst = min(worst, (Dn[x] - D[k, x]) / (n_nodes - k))
        best = max(best, worst)
    return best


def _extract_positive_cycle(u, v, w, n_nodes):
    """Bellman-Ford longest-walk relaxation; walk parent pointers to pull
    out a positive-total-weight cycle. Returns node list or None."""
    dist = np.zeros(n_nodes)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    relaxed_node = -1
    for it in range(n_nodes + 1):
        changed = False
        for e in range(u.size):
            a, b, we = u[e], v[e], w[e]
            if dist[a] + we > dist[b] + 1e-15:
                dist[b] = dist[a] + we
                parent[b] = a
                changed = True
                if it == n_nodes:
                    relaxed_node = b
        if not changed:
            return None
    if relaxed_node < 0:
        return None
    x = relaxed_node
    for _ in range(n_nodes):
        x = parent[x]
    cycle = [x]
    y = parent[x]
    while y != x:
        cycle.append(y)
        y = parent[y]
    cycle.reverse()
    return [int(c) for c in cycle]


def check_positivity_condition(model: ScoreModel) -> CycleWitness | None:
    """Search for paired cycles with positive total score.

    The condition holds iff the maximum mean cycle weight of the product
    chain is positive; the witness comes from positive-cycle extraction
    and is re-verified before returning. Returns None on failure.
    """
    u, v, w, n_nodes = _product_graph(model)
    max_mean = _karp_max_mean(u, v, w, n_nodes)
    if not (max_mean > 0):
        return None
    cyc = _extract_positive_cycle(u, v, w, n_nodes)
    if cyc is None:  # pragma: no cover - extraction must succeed when max_mean > 0
        raise ConvergenceFailure("positive max mean cycle found but extraction failed")
    E = model.alphabet_size
    xs = tuple(int(c) // E for c in cyc)
    ys = tuple(int(c) % E for c in cyc)
    total = _cycle_pair_score(model, xs, ys, shift=0)
    if not total > 0:  # pragma: no cover
        raise ConvergenceFailure("extracted cycle is not positive; numerical inconsistency")
    return CycleWitness(x_cycle=xs, y_cycle=ys, total_score=float(total), max_mean=float(max_mean))


# ---------------------------------------------------------------------------
# condition: shift condition (best effort diagnostics)


def _is_cycle(M: np.ndarray, seq) -> bool:
    n = len(seq)
    return all(M[seq[i], seq[(i + 1) % n]] > 0 for i in range(n))


def _cycle_pair_score(model: ScoreModel, xs, ys, shift: int) -> float:
    n = len(xs)
    tab = model.score.table
    total = 0.0
    if model.is_transition:
        for k in range(n):
            total += tab[
                xs[k], ys[(k + shift) % n], xs[(k + 1) % n], ys[(k + 1 + shift) % n]
            ]
    else:
        for k in range(n):
            total += tab[xs[k], ys[(k + shift) % n]]
    return float(total)


def is_additive(model: ScoreModel, tol: float = 1e-12) -> bool | None:
    """Whether a pair score has the form f(x,y) = f1(x) + f2(y), i.e. all
    second differences vanish. None for transition scores."""
    if model.is_transition:
        return None
    f = model.score.table
    # d[x,y,x',y'] = f(x,y) - f(x,y') - f(x',y) + f(x',y')
    d = f[:, :, None, None] - f[:, None, None, :] - f.T[None, :, :, None] + f[None, None, :, :]
    return bool(np.all(np.abs(d) <= tol))


def _random_cycle(M: np.ndarray, n: int, rng: np.random.Generator, tries: int = 64):
    """Sample a length-n cycle w.r.t. M by a support walk with rejection
    on the wrap-around edge."""
    E = M.shape[0]
    succ = [np.nonzero(M[s] > 0)[0] for s in range(E)]
    for _ in range(tries):
        seq = [int(rng.integers(E))]
        for _ in range(n - 1):
            nxt = succ[seq[-1]]
            seq.append(int(nxt[rng.integers(nxt.size)]))
        if M[seq[-1], seq[0]] > 0:
            return seq
    return None


def _enumerate_cycles(M: np.ndarray, n: int, budget: int):
    """All length-n cycles w.r.t. M (up to the budget)."""
    E = M.shape[0]
    out = []
    stack = [(s,) for s in range(E)]
    while stack:
        seq = stack.pop()
        if len(seq) == n:
            if M[seq[-1], seq[0]] > 0:
                out.append(seq)
                if len(out) >= budget:
                    break
            continue
        for t in range(E):
            if M[seq[-1], t] > 0:
                stack.append(seq + (t,))
    return out


def check_shift_condition(
    model: ScoreModel,
    T_max: int = 8,
    *,
    seed: int = 0,
    exhaustive_budget: int = 20_000,
    random_tries: int = 4_000,
    max_random_len: int = 32,
) -> ShiftReport:
    """Bounded search for shift-condition witnesses, per T in 1..T_max.

    A witness for T is a cycle pair whose plain and T-shifted score sums
    differ. NoWitnessFound is a report, not a failure: the condition is
    existential over all cycle lengths. Additive pair scores provably
    admit no witness, so the search is skipped for them.
    """
    additive = is_additive(model)
    strictly_positive = bool(np.all(model.P > 0) and np.all(model.Q > 0))
    found: dict[int, ShiftWitness | None] = {T: None for T in range(1, T_max + 1)}
    if additive:
        return ShiftReport(found=found, additive_form=True, strictly_positive=strictly_positive)

    rng = np.random.default_rng(seed)
    E = model.alphabet_size
    tol = 0.0 if model.lattice else 1e-12
    for T in range(1, T_max + 1):
        witness = None
        # exhaustive phase over short cycles
        n = 2
        while witness is None and E ** (2 * n) <= exhaustive_budget and n <= 8:
            if T % n != 0:
                xcs = _enumerate_cycles(model.P, n, exhaustive_budget)
                ycs = _enumerate_cycles(model.Q, n, exhaustive_budget)
                for xs in xcs:
                    for ys in ycs:
                        a = _cycle_pair_score(model, xs, ys, 0)
                        b = _cycle_pair_score(model, xs, ys, T)
                        if abs(a - b) > tol:
                            witness = ShiftWitness(tuple(xs), tuple(ys), a, b)
                            break
                    if witness:
                        break
            n += 1
        # random phase over longer cycles
        tries = 0
        while witness is None and tries < random_tries:
            n = int(rng.integers(max(2, T + 1), max_random_len + 1))
            if T % n == 0:
                tries += 1
                continue
            xs = _random_cycle(model.P, n, rng)
            ys = _random_cycle(model.Q, n, rng)
            tries += 1
            if xs is None or ys is None:
                continue
            a = _cycle_pair_score(model, xs, ys, 0)
            b = _cycle_pair_score(model, xs, ys, T)
            if abs(a - b) > tol:
                witness = ShiftWitness(tuple(xs), tuple(ys), a, b)
        found[T] = witness
    return ShiftReport(found=found, additive_form=additive, strictly_positive=strictly_positive)
