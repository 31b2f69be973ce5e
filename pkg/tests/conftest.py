"""Shared fixtures and independent brute-force oracles.

The oracles here deliberately avoid the package's streaming scan and
power iterations: score matrices are built by the plain recursion,
excursions come straight from their definition, maxima from exhaustive
enumeration over all alignments, and eigenvalues from dense solvers.
"""

from __future__ import annotations

import numpy as np
import pytest

import chainalign as ca

# ---------------------------------------------------------------------------
# reference models

UNIFORM2 = [[0.5, 0.5], [0.5, 0.5]]
MATCH_MISMATCH = [[1.0, -2.0], [-2.0, 1.0]]

# 2-state chains with distinct rows that pass the sufficient spectral test
MARKOV_P = [[0.7, 0.3], [0.3, 0.7]]
MARKOV_Q = [[0.6, 0.4], [0.4, 0.6]]

# sufficient test fails (phi_2(g*) = 1.0025) but the J optimisation passes
GAP_P = [[0.8282343675787401, 0.17176563242125986], [0.2973592307701676, 0.7026407692298324]]
GAP_Q = [[0.8428001232585172, 0.15719987674148284], [0.10339208738255665, 0.8966079126174433]]
GAP_F = [[3.0, -4.0], [-3.0, 2.0]]

# converged J values land below the threshold: verdict fail
FAIL_P = [[0.6582482041831537, 0.34175179581684634], [0.24289088111443186, 0.7571091188855681]]
FAIL_Q = [[0.3285068277935225, 0.6714931722064774], [0.7695194870973499, 0.23048051290265015]]
FAIL_F = [[3.0, 3.0], [-5.0, -4.0]]


@pytest.fixture(scope="session")
def iid_model():
    return ca.validate_model(2, UNIFORM2, UNIFORM2, MATCH_MISMATCH)


@pytest.fixture(scope="session")
def iid_tilted(iid_model):
    return ca.solve_theta_star(iid_model)


@pytest.fixture(scope="session")
def markov_model():
    return ca.validate_model(2, MARKOV_P, MARKOV_Q, MATCH_MISMATCH)


@pytest.fixture(scope="session")
def markov_tilted(markov_model):
    return ca.solve_theta_star(markov_model)


def random_model(rng, E=None, *, integer=True, lo=-4, hi=4, markov=True, need_mu_neg=True):
    """A random valid model with negative drift and a positive score."""
    E = E or int(rng.integers(2, 5))
    for _ in range(200):
        if markov:
            P = rng.dirichlet(np.full(E, 2.0), size=E)
            Q = rng.dirichlet(np.full(E, 2.0), size=E)
        else:
            P = np.tile(rng.dirichlet(np.full(E, 2.0)), (E, 1))
            Q = np.tile(rng.dirichlet(np.full(E, 2.0)), (E, 1))
        if integer:
            f = rng.integers(lo, hi, (E, E)).astype(float)
        else:
            f = rng.normal(0.0, 1.5, (E, E))
        m = ca.validate_model(E, P, Q, f)
        st = ca.stationary(m)
        if f.max() <= 0:
            continue
        if need_mu_neg and st.mu >= -0.05:
            continue
        if ca.check_positivity_condition(m) is None:
            continue
        return m, st
    raise RuntimeError("could not draw a usable random model")


# ---------------------------------------------------------------------------
# alignment oracles


def oracle_T(model, x, y):
    """Score matrix straight from the recursion, no streaming."""
    m, n = len(x), len(y)
    T = np.zeros((m + 1, n + 1))
    tab = model.score.table
    if model.is_transition:
        for i in range(2, m + 1):
            for j in range(2, n + 1):
                T[i, j] = max(T[i - 1, j - 1] + tab[x[i - 2], y[j - 2], x[i - 1], y[j - 1]], 0.0)
    else:
        for i in range(1, m + 1):
            for j in range(1, n + 1):
                T[i, j] = max(T[i - 1, j - 1] + tab[x[i - 1], y[j - 1]], 0.0)
    return T


def _incr(model, x, y, i, j, k):
    """The k-th increment of S^delta_{i,j}, straight from the definition."""
    tab = model.score.table
    if model.is_transition:
        return tab[x[i + k - 2], y[j + k - 2], x[i + k - 1], y[j + k - 1]]
    return tab[x[i + k - 1], y[j + k - 1]]


def oracle_excursions(model, x, y):
    """Excursions by definition: zero cells of T, Delta as the first exit
    (sum drops to zero or an index hits the boundary), peak as the max of
    T along the stretch; only positive peaks are kept."""
    m, n = len(x), len(y)
    T = oracle_T(model, x, y)
    lo = 1 if model.is_transition else 0
    out = []
    for i in range(lo, m):
        for j in range(lo, n):
            if T[i, j] != 0.0:
                continue
            S = 0.0
            delta = None
            reason = None
            for d in range(1, min(m - i, n - j) + 1):
                S += _incr(model, x, y, i, j, d)
                if S <= 0:
                    delta, reason = d, "ScoreDropped"
                    break
                if i + d == m or j + d == n:
                    delta, reason = d, "HitBoundary"
                    break
            if delta is None:
                continue
            peak = max(T[i + d2, j + d2] for d2 in range(1, delta + 1))
            if peak > 0:
                out.append((i, j, delta, peak, reason))
    return sorted(out)


def oracle_max_alignment(model, x, y):
    """Exhaustive maximum over all alignments (i, j, delta)."""
    m, n = len(x), len(y)
    best = 0.0
    lo = 1 if model.is_transition else 0
    for i in range(lo, m + 1):
        for j in range(lo, n + 1):
            S = 0.0
            for d in range(1, min(m - i, n - j) + 1):
                S += _incr(model, x, y, i, j, d)
                best = max(best, S)
    return best


def oracle_counts(model, x, y, t):
    return sum(1 for e in oracle_excursions(model, x, y) if e[3] > t)


# ---------------------------------------------------------------------------
# graph oracles


def oracle_positive_cycle_exists(model):
    """Tropical (max-plus) matrix powers: a positive-sum cycle exists iff
    some diagonal entry of some power up to |V| is positive."""
    E = model.alphabet_size
    f4 = model.table4()
    mask = (model.P > 0)[:, None, :, None] & (model.Q > 0)[None, :, None, :]
    V = E * E
    W = np.full((V, V), -np.inf)
    xs, ys, xps, yps = np.nonzero(mask)
    W[xs * E + ys, xps * E + yps] = f4[xs, ys, xps, yps]
    A = W.copy()
    for _ in range(V):
        if np.any(np.diag(A) > 0):
            return True
        # tropical product A = A (x) W
        A = np.max(A[:, :, None] + W[None, :, :], axis=1)
    return bool(np.any(np.diag(A) > 0))
