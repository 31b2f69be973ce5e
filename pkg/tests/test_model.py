"""Model validation, stationary laws, and the cycle conditions."""

import numpy as np
import pytest

import chainalign as ca
from chainalign.model import is_additive

from conftest import UNIFORM2, MATCH_MISMATCH, oracle_positive_cycle_exists, random_model


class TestValidate:
    def test_uniform_binary_valid(self, iid_model):
        assert iid_model.lattice
        assert iid_model.alphabet_size == 2
        assert not iid_model.is_transition
        assert iid_model.is_iid

    def test_zero_row_rejected(self):
        with pytest.raises(ca.ModelError) as err:
            ca.validate_model(2, [[0.0, 0.0], [0.5, 0.5]], UNIFORM2, MATCH_MISMATCH)
        assert any(isinstance(v, ca.NonStochasticRow) for v in err.value.violations)

    def test_periodic_rejected(self):
        with pytest.raises(ca.ModelError) as err:
            ca.validate_model(2, [[0.0, 1.0], [1.0, 0.0]], UNIFORM2, MATCH_MISMATCH)
        assert any(isinstance(v, ca.Periodic) for v in err.value.violations)
        assert "period 2" in str(err.value)

    def test_reducible_rejected(self):
        with pytest.raises(ca.ModelError) as err:
            ca.validate_model(2, [[1.0, 0.0], [0.5, 0.5]], UNIFORM2, MATCH_MISMATCH)
        assert any(isinstance(v, ca.Reducible) for v in err.value.violations)

    def test_negative_entry_rejected(self):
        with pytest.raises(ca.ModelError):
            ca.validate_model(2, [[1.1, -0.1], [0.5, 0.5]], UNIFORM2, MATCH_MISMATCH)

    def test_all_violations_reported(self):
        with pytest.raises(ca.ModelError) as err:
            ca.validate_model(2, [[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.5, 0.5]], MATCH_MISMATCH)
        kinds = {type(v) for v in err.value.violations}
        assert ca.Periodic in kinds and ca.Reducible in kinds

    def test_row_renormalized_within_tolerance(self):
        P = np.array([[0.5 + 4e-10, 0.5], [0.5, 0.5]])
        m = ca.validate_model(2, P, UNIFORM2, MATCH_MISMATCH)
        assert np.allclose(m.P.sum(axis=1), 1.0, atol=1e-15)

    def test_row_sum_beyond_tolerance_rejected(self):
        P = np.array([[0.5 + 1e-6, 0.5], [0.5, 0.5]])
        with pytest.raises(ca.ModelError):
            ca.validate_model(2, P, UNIFORM2, MATCH_MISMATCH)

    def test_gcd_rescale_warns(self):
        with pytest.warns(ca.GcdNotOne):
            m = ca.validate_model(2, UNIFORM2, UNIFORM2, [[2, -4], [-4, 2]])
        assert m.score_divisor == 2
        assert np.array_equal(m.score.table, np.array(MATCH_MISMATCH))
        assert m.lattice

    def test_lattice_claim_on_real_scores_rejected(self):
        with pytest.raises(ca.ModelError):
            ca.validate_model(2, UNIFORM2, UNIFORM2, [[1.5, -2], [-2, 1]], lattice=True)

    def test_real_scores_nonlattice(self):
        m = ca.validate_model(2, UNIFORM2, UNIFORM2, [[1.5, -2.0], [-2.0, 1.0]])
        assert not m.lattice

    def test_idempotent(self, iid_model):
        m2 = ca.validate_model(
            iid_model.alphabet_size, iid_model.P, iid_model.Q, iid_model.score.table
        )
        assert np.array_equal(m2.P, iid_model.P)
        assert np.array_equal(m2.Q, iid_model.Q)
        assert np.array_equal(m2.score.table, iid_model.score.table)
        assert m2.lattice == iid_model.lattice

    def test_immutability(self, iid_model):
        with pytest.raises(ValueError):
            iid_model.P[0, 0] = 0.9


class TestStationary:
    def test_uniform(self, iid_model):
        st = ca.stationary(iid_model)
        assert np.allclose(st.pi_P, [0.5, 0.5], atol=1e-14)
        assert st.mu == pytest.approx(-0.5, abs=1e-13)

    def test_two_state_exact(self):
        # pi solves pi P = pi with sum 1: independent linear-solver oracle
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        m = ca.validate_model(2, P, UNIFORM2, MATCH_MISMATCH)
        st = ca.stationary(m)
        assert np.allclose(st.pi_P, [5.0 / 6.0, 1.0 / 6.0], atol=1e-12)
        A = np.vstack([(P - np.eye(2)).T, np.ones(2)])
        sol, *_ = np.linalg.lstsq(A, np.array([0.0, 0.0, 1.0]), rcond=None)
        assert np.allclose(st.pi_P, sol, atol=1e-10)

    def test_residual_small_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m, st = random_model(rng, need_mu_neg=False)
            assert np.abs(st.pi_P @ m.P - st.pi_P).sum() < 1e-12
            assert np.abs(st.pi_Q @ m.Q - st.pi_Q).sum() < 1e-12
            assert st.pi_P.sum() == pytest.approx(1.0, abs=1e-13)

    def test_transition_score_mu(self):
        # mean of f(X1,Y1,X2,Y2) under stationarity, direct-sum oracle
        rng = np.random.default_rng(5)
        E = 2
        P = rng.dirichlet([2, 2], size=E)
        Q = rng.dirichlet([2, 2], size=E)
        f4 = rng.normal(size=(E, E, E, E))
        m = ca.validate_model(E, P, Q, f4, transition=True)
        st = ca.stationary(m)
        total = 0.0
        for x in range(E):
            for y in range(E):
                for xp in range(E):
                    for yp in range(E):
                        total += st.pi_P[x] * st.pi_Q[y] * P[x, xp] * Q[y, yp] * f4[x, y, xp, yp]
        assert st.mu == pytest.approx(total, abs=1e-12)


class TestPositivity:
    def test_self_loop_witness(self, iid_model):
        w = ca.check_positivity_condition(iid_model)
        assert w is not None
        assert w.total_score > 0
        assert len(w.x_cycle) == len(w.y_cycle)

    def test_all_negative_fails(self):
        m = ca.validate_model(2, UNIFORM2, UNIFORM2, [[-1, -1], [-1, -1]])
        assert ca.check_positivity_condition(m) is None

    def test_witness_needs_length_two(self):
        # f positive only on one off-diagonal pair: the best cycle pairs
        # that letter against the right partner with period > 1
        E = 3
        P = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
        P = 0.7 * P + 0.3 / E
        Q = P.copy()
        f = np.full((E, E), -1.0)
        f[0, 1] = 5.0
        m = ca.validate_model(E, P, Q, f)
        w = ca.check_positivity_condition(m)
        assert w is not None and len(w.x_cycle) >= 2
        # witness is a genuine cycle pair for P and Q
        n = len(w.x_cycle)
        for k in range(n):
            assert m.P[w.x_cycle[k], w.x_cycle[(k + 1) % n]] > 0
            assert m.Q[w.y_cycle[k], w.y_cycle[(k + 1) % n]] > 0

    def test_matches_tropical_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            E = int(rng.integers(2, 5))
            P = rng.dirichlet(np.full(E, 0.8), size=E)
            Q = rng.dirichlet(np.full(E, 0.8), size=E)
            f = rng.integers(-3, 3, (E, E)).astype(float)
            try:
                m = ca.validate_model(E, P, Q, f)
            except ca.ModelError:
                continue
            got = ca.check_positivity_condition(m) is not None
            assert got == oracle_positive_cycle_exists(m)


class TestShiftCondition:
    def test_match_mismatch_witness_t1(self, iid_model):
        rep = ca.check_shift_condition(iid_model, T_max=1)
        assert rep.witness_found(1)
        w = rep.found[1]
        a = sum(MATCH_MISMATCH[w.x_cycle[k]][w.y_cycle[k]] for k in range(len(w.x_cycle)))
        n = len(w.x_cycle)
        b = sum(MATCH_MISMATCH[w.x_cycle[k]][w.y_cycle[(k + 1) % n]] for k in range(n))
        assert (w.plain_sum, w.shifted_sum) == (a, b)
        assert a != b

    def test_additive_never_finds_witness(self):
        f1 = np.array([2.0, -1.0])
        f2 = np.array([0.5, -3.0])
        f = f1[:, None] + f2[None, :]
        m = ca.validate_model(2, UNIFORM2, UNIFORM2, f)
        rep = ca.check_shift_condition(m, T_max=4)
        assert rep.additive_form is True
        assert rep.strictly_positive
        assert not any(rep.witness_found(T) for T in range(1, 5))

    def test_additive_detector(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            E = int(rng.integers(2, 5))
            f1 = rng.normal(size=E)
            f2 = rng.normal(size=E)
            f = f1[:, None] + f2[None, :]
            m = ca.validate_model(E, np.full((E, E), 1.0 / E), np.full((E, E), 1.0 / E), f)
            assert is_additive(m) is True
            g = f.copy()
            g[0, 0] += 0.37  # any nonzero second difference
            m2 = ca.validate_model(E, np.full((E, E), 1.0 / E), np.full((E, E), 1.0 / E), g)
            assert is_additive(m2) is False

    def test_distinct_scores_find_witnesses(self):
        f = np.array([[0.0, 1.0, 3.0], [6.0, 10.0, 15.0], [21.0, 28.0, 36.0]])
        m = ca.validate_model(3, np.full((3, 3), 1 / 3), np.full((3, 3), 1 / 3), f)
        rep = ca.check_shift_condition(m, T_max=3)
        for T in (1, 2, 3):
            assert rep.witness_found(T)

    def test_exhaustive_oracle_t1(self, iid_model):
        # enumerate every cycle pair of length <= 4 by brute force
        found = False
        E = 2
        for n in (2, 3, 4):
            for xc in np.ndindex(*(E,) * n):
                for yc in np.ndindex(*(E,) * n):
                    a = sum(MATCH_MISMATCH[xc[k]][yc[k]] for k in range(n))
                    b = sum(MATCH_MISMATCH[xc[k]][yc[(k + 1) % n]] for k in range(n))
                    if a != b:
                        found = True
        assert found == ca.check_shift_condition(iid_model, T_max=1).witness_found(1)
