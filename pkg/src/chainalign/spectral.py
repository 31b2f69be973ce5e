"""Perron-Frobenius engine and the exponential tilt.

Spectral radii of the tilted pair matrices, the root solve for the tilt
parameter theta*, and construction of the tilted chain (R*, pi*, pi_hat)
whose positive drift makes high-scoring excursions typical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceFailure, DriftNotNegative, NoPositiveCycle
from .model import (
    ScoreModel,
    StationaryInfo,
    _is_irreducible,
    _readonly,
    check_positivity_condition,
    stationary,
)

POWER_TOL = 1e-13
POWER_MAX_ITER = 100_000
ROOT_TOL = 1e-12
THETA_EXP_CAP = 700.0


@dataclass(frozen=True)
class PFResult:
    """Perron eigen-triple of a nonnegative irreducible matrix."""

    radius: float
    right_vec: np.ndarray  # max entry 1
    left_vec: np.ndarray  # sums to 1


@dataclass(frozen=True)
class TiltedModel:
    """The exponentially tilted chain at theta*.

    Vectors on pair states are flat with index x * |E| + y. ``mu_star``
    is the per-step score mean under the stationary tilted chain (pi*(f)
    for pair scores, pi_hat(f) for transition scores) and is positive.
    """

    model: ScoreModel
    stat: StationaryInfo
    theta_star: float
    r_star: np.ndarray  # (E^2,)
    R_star: np.ndarray  # (E^2, E^2), row stochastic
    pi_star: np.ndarray  # (E^2,)
    pi_hat: np.ndarray  # (E^2, E^2), pi*(i) R*(i,j)
    mu_star: float

    @property
    def lundberg_K(self) -> float:
        """Bound on the eigenvector fraction in the change of measure."""
        return float(self.r_star.max() / self.r_star.min())

    def pi_star_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        E = self.model.alphabet_size
        m = self.pi_star.reshape(E, E)
        return m.sum(axis=1), m.sum(axis=0)


# ---------------------------------------------------------------------------
# Perron-Frobenius


def _power_pair(M: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER):
    """Power iteration returning (radius, max-normalized vector) or None."""
    n = M.shape[0]
    x = np.full(n, 1.0)
    rho = 1.0
    for _ in range(max_iter):
        y = M @ x
        rho = float(y.max())
        if rho <= 0:
            raise ConvergenceFailure("matrix power annihilated the iterate")
        ynorm = y / rho
        if np.max(np.abs(y - rho * x)) <= tol * max(rho, 1.0):
            return rho, ynorm
        x = ynorm
    return None


def _radius_by_squaring(M: np.ndarray) -> float:
    """Gelfand limit ||M^(2^k)||^(1/2^k) with log-space scaling."""
    A = np.array(M, dtype=float)
    s0 = A.max()
    if s0 <= 0:
        return 0.0
    A /= s0
    logr = math.log(s0)
    prev = math.inf
    weight = 1.0
    for _ in range(80):
        A = A @ A
        s = A.max()
        if s <= 0:
            return 0.0
        A /= s
        weight *= 0.5
        logr += weight * math.log(s)
        if abs(logr - prev) < 1e-14 * max(1.0, abs(logr)):
            break
        prev = logr
    return math.exp(logr)


def _pf_one_side(M: np.ndarray):
    res = _power_pair(M)
    if res is not None:
        return res
    # slow mixing or periodic support: radius via squaring, then a
    # diagonal shift makes the iteration primitive with the same vectors
    rho = _radius_by_squaring(M)
    if rho <= 0:
        raise ConvergenceFailure("spectral radius is zero")
    shifted = _power_pair(M + rho * np.eye(M.shape[0]))
    if shifted is None:
        raise ConvergenceFailure("power iteration failed even after diagonal shift")
    rho2, vec = shifted
    return rho2 - rho, vec


def perron(M) -> PFResult:
    """Perron radius and strictly positive eigen-pair of a nonnegative
    irreducible matrix. Raises ValueError on a reducible or negative
    input, ConvergenceFailure if the iteration cannot settle."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("perron expects a square matrix")
    if np.any(M < 0):
        raise ValueError("perron expects a nonnegative matrix")
    if not _is_irreducible(M > 0):
        raise ValueError("perron expects an irreducible matrix")
    rho_r, right = _pf_one_side(M)
    rho_l, left = _pf_one_side(M.T)
    rho = max(rho_r, rho_l)
    left = left / left.sum()
    if right.min() <= 0 or left.min() <= 0:
        raise ConvergenceFailure("eigenvector has nonpositive entries")
    return PFResult(radius=float(rho), right_vec=_readonly(right), left_vec=_readonly(left))


# ---------------------------------------------------------------------------
# tilted matrices


def _support4(model: ScoreModel) -> np.ndarray:
    return (model.P > 0)[:, None, :, None] & (model.Q > 0)[None, :, None, :]


def pair_tilted_matrix(model: ScoreModel, g4: np.ndarray):
    """Matrix exp(g(x,y,x',y')) P[x,x'] Q[y,y'] on pair states, scaled by
    exp(-gmax) over the support for overflow safety.

    Returns (matrix, log_factor) with radius(original) =
    exp(log_factor) * radius(matrix).
    """
    E = model.alphabet_size
    sup = _support4(model)
    gmax = float(np.max(g4[sup])) if np.any(sup) else 0.0
    W = model.P[:, None, :, None] * model.Q[None, :, None, :]
    A = np.where(sup, np.exp(np.clip(g4 - gmax, -745.0, 0.0)) * W, 0.0)
    return A.reshape(E * E, E * E), gmax


def triple_tilted_matrix(model: ScoreModel, g4: np.ndarray, which: int):
    """Matrix on E^3 states for the two overlap geometries.

    which=1: states (x,y,z), exponent g(x,y,x',y') + g(x,z,x',z'),
             weights P QQ (one shared X against two Y copies).
    which=2: states (x,w,y), exponent g(x,y,x',y') + g(w,y,w',y'),
             weights PP Q (two X copies against one shared Y).
    """
    E = model.alphabet_size
    P, Q = model.P, model.Q
    if which == 1:
        gsum = g4[:, :, None, :, :, None] + g4[:, None, :, :, None, :]
        W = P[:, None, None, :, None, None] * Q[None, :, None, None, :, None] * Q[None, None, :, None, None, :]
    elif which == 2:
        gsum = g4[:, None, :, :, None, :] + g4[None, :, :, None, :, :]
        W = P[:, None, None, :, None, None] * P[None, :, None, None, :, None] * Q[None, None, :, None, None, :]
    else:
        raise ValueError("which must be 1 or 2")
    sup = W > 0
    gmax = float(np.max(gsum[sup]))
    A = np.where(sup, np.exp(np.clip(gsum - gmax, -745.0, 0.0)) * W, 0.0)
    return A.reshape(E**3, E**3), gmax


def log_phi(model: ScoreModel, theta: float) -> float:
    """log of the spectral radius of the tilted pair matrix Phi(theta)."""
    A, logf = pair_tilted_matrix(model, theta * model.table4())
    rho, _ = _pf_one_side(A)
    return logf + math.log(rho)


def phi(model: ScoreModel, theta: float) -> float:
    """Spectral radius of the tilted pair matrix Phi(theta)."""
    v = log_phi(model, theta)
    return math.exp(v) if v < 709.0 else math.inf


def phi0(model: ScoreModel, g4: np.ndarray) -> float:
    """Spectral radius of the pair-transition tilted matrix at an
    arbitrary exponent table g."""
    A, logf = pair_tilted_matrix(model, np.asarray(g4, dtype=float))
    rho, _ = _pf_one_side(A)
    return math.exp(logf + math.log(rho))


def phi_i(model: ScoreModel, g4, which: int) -> float:
    """Spectral radius of the E^3 overlap matrix Phi_1(g) or Phi_2(g)."""
    return math.exp(log_phi_i(model, g4, which))


def log_phi_i(model: ScoreModel, g4, which: int) -> float:
    g4 = np.asarray(g4, dtype=float)
    if not np.all(np.isfinite(g4)):
        raise ValueError("g must be finite")
    A, logf = triple_tilted_matrix(model, g4, which)
    rho, _ = _pf_one_side(A)
    return logf + math.log(rho)


def log_phi_i_with_occupancy(model: ScoreModel, g4, which: int):
    """log phi_i(g) and the gradient of log phi_i at g.

    The gradient entry at (x,y,x',y') is the expected number of times the
    stationary g-tilted E^3 chain's transition realises that pair pattern
    through either of its two exponent slots (total mass 2).
    """
    E = model.alphabet_size
    g4 = np.asarray(g4, dtype=float)
    A, logf = triple_tilted_matrix(model, g4, which)
    res = perron(A)
    rho, r, l = res.radius, res.right_vec, res.left_vec
    # stationary edge measure of the tilted chain: pi(s) Rtilde(s,s')
    edge = (l[:, None] * A * r[None, :]) / (rho * float(l @ r))
    edge6 = edge.reshape(E, E, E, E, E, E)
    if which == 1:
        # slots (x,y,x',y') and (x,z,x',z') of states (x,y,z)
        occ = edge6.sum(axis=(2, 5)) + edge6.sum(axis=(1, 4))
    else:
        # slots (x,y,x',y') and (w,y,w',y') of states (x,w,y)
        occ = edge6.sum(axis=(1, 4)) + edge6.sum(axis=(0, 3))
    return logf + math.log(rho), occ


# ---------------------------------------------------------------------------
# theta* and the tilted chain


def solve_theta_star(model: ScoreModel, stat: StationaryInfo | None = None) -> TiltedModel:
    """Solve phi(theta*) = 1 on theta > 0 and build the tilted chain.

    Requires negative drift and an existing positive-score cycle pair;
    the bracket is found by doubling/halving from theta = 1 and the root
    polished until |phi(theta*) - 1| < 1e-12.
    """
    if stat is None:
        stat = stationary(model)
    if stat.mu >= -1e-12:
        raise DriftNotNegative(f"drift mu = {stat.mu:.6g} must be strictly negative")
    if check_positivity_condition(model) is None:
        raise NoPositiveCycle("no cycle pair with positive total score; phi stays below 1")

    fmax = model.max_abs_score()
    if fmax == 0:
        raise NoPositiveCycle("score function is identically zero")
    theta_cap = THETA_EXP_CAP / fmax

    lphi = lambda th: log_phi(model, th)
    hi = min(1.0, theta_cap)
    v = lphi(hi)
    if abs(v) < 1e-15:
        theta = hi
    else:
        if v > 0:
            lo = hi
            while v > 0:
                lo /= 2
                if lo < 1e-300:
                    raise ConvergenceFailure("bracketing collapsed toward theta = 0")
                v = lphi(lo)
            hi = lo * 2
        else:
            lo = hi
            while v < 0:
                if hi >= theta_cap:
                    raise ConvergenceFailure(
                        "phi(theta) still below 1 at the overflow cap; check the model"
                    )
                lo = hi
                hi = min(hi * 2, theta_cap)
                v = lphi(hi)
        theta = float(brentq(lphi, lo, hi, xtol=1e-15, rtol=8.9e-16))
    if abs(phi(model, theta) - 1.0) > ROOT_TOL:
        raise ConvergenceFailure(f"root polish failed: |phi(theta*) - 1| > {ROOT_TOL:g}")

    E = model.alphabet_size
    A, logf = pair_tilted_matrix(model, theta * model.table4())
    pf = perron(A)
    rho = pf.radius * math.exp(logf)  # = phi(theta*) ~ 1
    r = pf.right_vec
    Phi = A * math.exp(logf)
    R = Phi * r[None, :] / r[:, None] / rho
    R /= R.sum(axis=1, keepdims=True)
    from .model import _stationary_vector

    pi_star = _stationary_vector(R)
    pi_hat = pi_star[:, None] * R
    if model.is_transition:
        mu_star = float(np.sum(pi_hat * model.score.table.reshape(E * E, E * E)))
    else:
        mu_star = float(pi_star @ model.score.table.reshape(E * E))
    if mu_star <= 0:
        raise ConvergenceFailure(f"tilted drift mu* = {mu_star:.6g} is not positive")
    return TiltedModel(
        model=model,
        stat=stat,
        theta_star=theta,
        r_star=_readonly(r),
        R_star=_readonly(R),
        pi_star=_readonly(pi_star),
        pi_hat=_readonly(pi_hat),
        mu_star=mu_star,
    )
