"""Unit tests for the spin pair correlation experiments.

Closed forms (joint tables, CHSH, marginals), the two hidden-variable
bounds, the sampling layer against its own closed forms, and the
no-signaling audit routes.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packetlab.errors import (
    DomainError,
    PreconditionError,
    UnsupportedModelError,
)
from packetlab.numkit import (
    RandomStream,
    UnitVector3,
    sample_isotropic_direction,
)
from packetlab.spincorr import (
    BipartiteCoefficients,
    LhvModel,
    PairModel,
    basis_change,
    bipartite_joint,
    chsh,
    coincidence_expectation,
    coplanar_axis,
    expectation,
    joint_probability,
    joint_table,
    lhv_chsh_audit,
    lhv_expectation,
    marginal,
    no_signaling_audit,
    random_lhv_model,
    sample_pair,
    sample_pair_counts,
    semiclassical_lhv_model,
    sign_anticorrelated_model,
    singlet_coefficients,
    spin_up_probability,
)

TWO_SQRT_TWO = 2.0 * math.sqrt(2.0)


def _random_axes(seed, n):
    rng = RandomStream(seed)
    return [sample_isotropic_direction(rng) for _ in range(n)]


class TestSpinUpProbability:
    def test_endpoints(self):
        assert spin_up_probability(0.0) == pytest.approx(1.0)
        assert spin_up_probability(math.pi) == pytest.approx(0.0, abs=1e-15)
        assert spin_up_probability(math.pi / 2.0) == pytest.approx(0.5)

    def test_half_angle_form(self):
        for theta in np.linspace(0.0, math.pi, 17):
            want = math.cos(theta / 2.0) ** 2
            assert spin_up_probability(theta) == pytest.approx(want, abs=1e-14)


class TestSingletClosedForms:
    def test_joint_table(self):
        a, b = coplanar_axis(0.0), coplanar_axis(0.3)
        t = joint_table(PairModel.qm_singlet(), a, b)
        d = a.dot(b)
        assert t.pp == pytest.approx((1.0 - d) / 4.0, abs=1e-14)
        assert t.mm == pytest.approx((1.0 - d) / 4.0, abs=1e-14)
        assert t.pm == pytest.approx((1.0 + d) / 4.0, abs=1e-14)
        assert t.mp == pytest.approx((1.0 + d) / 4.0, abs=1e-14)

    def test_perfect_anticorrelation(self):
        a = coplanar_axis(1.1)
        t = joint_table(PairModel.qm_singlet(), a, a)
        assert t.pp == pytest.approx(0.0, abs=1e-14)
        assert t.expectation == pytest.approx(-1.0)

    def test_expectation_is_minus_dot(self):
        for a, b in zip(_random_axes(11, 20), _random_axes(12, 20)):
            e = expectation(PairModel.qm_singlet(), a, b)
            assert e == pytest.approx(-a.dot(b), abs=1e-13)

    def test_table_sums_to_one(self):
        for a, b in zip(_random_axes(13, 50), _random_axes(14, 50)):
            t = joint_table(PairModel.qm_singlet(), a, b)
            assert t.pp + t.pm + t.mp + t.mm == pytest.approx(1.0, abs=1e-12)

    def test_joint_probability_matches_table(self):
        a, b = coplanar_axis(0.4), coplanar_axis(1.7)
        t = joint_table(PairModel.qm_singlet(), a, b)
        assert joint_probability(PairModel.qm_singlet(), 1, -1, a, b) == t.pm
        assert joint_probability(PairModel.qm_singlet(), -1, 1, a, b) == t.mp

    def test_outcome_guard(self):
        a = coplanar_axis(0.0)
        with pytest.raises(DomainError):
            joint_probability(PairModel.qm_singlet(), 0, 1, a, a)


class TestSemiclassicalClosedForms:
    def test_reduced_correlation(self):
        for a, b in zip(_random_axes(15, 30), _random_axes(16, 30)):
            e = expectation(PairModel.semiclassical(), a, b)
            assert e == pytest.approx(-a.dot(b) / 3.0, abs=1e-13)

    def test_joint_table(self):
        a, b = coplanar_axis(0.2), coplanar_axis(1.0)
        t = joint_table(PairModel.semiclassical(), a, b)
        d = a.dot(b)
        assert t.pp == pytest.approx((1.0 - d / 3.0) / 4.0, abs=1e-14)
        assert t.pm == pytest.approx((1.0 + d / 3.0) / 4.0, abs=1e-14)

    def test_no_perfect_anticorrelation(self):
        a = coplanar_axis(0.9)
        assert expectation(PairModel.semiclassical(), a, a) == pytest.approx(
            -1.0 / 3.0
        )


class TestTriplet:
    def test_m0_closed_form(self):
        z = UnitVector3(0.0, 0.0, 1.0)
        for a, b in zip(_random_axes(17, 20), _random_axes(18, 20)):
            e = expectation(PairModel.triplet(0, z), a, b)
            want = a.dot(b) - 2.0 * a.z * b.z
            assert e == pytest.approx(want, abs=1e-13)

    def test_m1_is_product_form(self):
        z = UnitVector3(0.0, 0.0, 1.0)
        for a, b in zip(_random_axes(19, 20), _random_axes(20, 20)):
            for m in (1, -1):
                e = expectation(PairModel.triplet(m, z), a, b)
                assert e == pytest.approx(a.z * b.z, abs=1e-13)

    def test_m_guard(self):
        with pytest.raises(DomainError):
            PairModel.triplet(2, UnitVector3(0.0, 0.0, 1.0))


class TestChsh:
    def test_quantum_maximum(self):
        a, b, a2, b2 = (coplanar_axis(math.radians(t)) for t in (0.0, 45.0, 90.0, -45.0))
        k = chsh(PairModel.qm_singlet(), a, b, a2, b2)
        assert k == pytest.approx(TWO_SQRT_TWO, abs=1e-12)

    def test_semiclassical_canonical(self):
        a, b, a2, b2 = (coplanar_axis(math.radians(t)) for t in (0.0, 45.0, 90.0, -45.0))
        k = chsh(PairModel.semiclassical(), a, b, a2, b2)
        assert k == pytest.approx(TWO_SQRT_TWO / 3.0, abs=1e-12)

    def test_quantum_never_exceeds_tsirelson(self):
        rng = RandomStream(21)
        for _ in range(200):
            axes = [sample_isotropic_direction(rng) for _ in range(4)]
            assert chsh(PairModel.qm_singlet(), *axes) <= TWO_SQRT_TWO + 1e-12


class TestMarginals:
    def test_always_half(self):
        models = [PairModel.qm_singlet(), PairModel.semiclassical()]
        for a, b in zip(_random_axes(22, 100), _random_axes(23, 100)):
            for model in models:
                for r_b in (1, -1):
                    assert abs(marginal(model, a, b, r_b) - 0.5) < 1e-12

    def test_triplet_has_no_joint_law(self):
        z = UnitVector3(0.0, 0.0, 1.0)
        a = coplanar_axis(0.7)
        with pytest.raises(UnsupportedModelError):
            marginal(PairModel.triplet(1, z), a, z, 1)


class TestSampling:
    def test_batch_counts_match_scalar_sequence(self):
        model = PairModel.qm_singlet()
        a, b = coplanar_axis(0.0), coplanar_axis(0.6)
        counts = sample_pair_counts(model, a, b, 500, RandomStream(31))
        rng = RandomStream(31)
        tally = {(1, 1): 0, (1, -1): 0, (-1, 1): 0, (-1, -1): 0}
        for _ in range(500):
            tally[sample_pair(model, a, b, rng)] += 1
        assert counts == (
            tally[(1, 1)],
            tally[(1, -1)],
            tally[(-1, 1)],
            tally[(-1, -1)],
        )

    def test_qm_parallel_frequencies(self):
        # theta = 0: all weight on the anticorrelated outcomes
        a = coplanar_axis(0.0)
        n = 10**6
        pp, pm, mp, mm = sample_pair_counts(
            PairModel.qm_singlet(), a, a, n, RandomStream(32)
        )
        assert pp == 0 and mm == 0
        assert abs(pm / n - 0.5) < 0.0015

    def test_qm_sixty_degrees(self):
        a, b = coplanar_axis(0.0), coplanar_axis(math.pi / 3.0)
        counts = sample_pair_counts(PairModel.qm_singlet(), a, b, 10**6, RandomStream(33))
        assert coincidence_expectation(*counts) == pytest.approx(-0.5, abs=0.003)

    def test_semiclassical_parallel(self):
        a = coplanar_axis(0.0)
        counts = sample_pair_counts(
            PairModel.semiclassical(), a, a, 10**6, RandomStream(34)
        )
        assert coincidence_expectation(*counts) == pytest.approx(-1.0 / 3.0, abs=0.003)

    def test_empirical_chsh_at_45(self):
        a, b = coplanar_axis(0.0), coplanar_axis(math.radians(45.0))
        counts = sample_pair_counts(PairModel.qm_singlet(), a, b, 10**6, RandomStream(35))
        want = -math.cos(math.radians(45.0))
        assert coincidence_expectation(*counts) == pytest.approx(want, abs=0.003)

    def test_coincidence_guard(self):
        with pytest.raises(DomainError):
            coincidence_expectation(0, 0, 0, 0)


class TestLhvModels:
    def test_random_model_weights(self):
        model = random_lhv_model(RandomStream(41), 16)
        assert abs(model.weights.sum() - 1.0) < 1e-10
        assert np.all(model.weights >= 0.0)

    def test_random_model_bound(self):
        rng = RandomStream(42)
        a = np.stack([sample_isotropic_direction(rng).as_array() for _ in range(50)])
        b = np.stack([sample_isotropic_direction(rng).as_array() for _ in range(50)])
        a2 = np.stack([sample_isotropic_direction(rng).as_array() for _ in range(50)])
        b2 = np.stack([sample_isotropic_direction(rng).as_array() for _ in range(50)])
        for seed in range(20):
            model = random_lhv_model(RandomStream(seed, 99), 16)
            k, ok = lhv_chsh_audit(model, a, b, a2, b2)
            assert ok
            assert np.max(k) <= 2.0 + 1e-9

    def test_sign_model_anticorrelated(self):
        model = sign_anticorrelated_model(RandomStream(43))
        for a in _random_axes(44, 10):
            assert lhv_expectation(model, a, a) == pytest.approx(-1.0, abs=1e-12)

    def test_sign_model_bound(self):
        model = sign_anticorrelated_model(RandomStream(45))
        rng = RandomStream(46)
        for _ in range(50):
            axes = [sample_isotropic_direction(rng) for _ in range(4)]
            k, ok = lhv_chsh_audit(model, *axes)
            assert ok and k <= 2.0 + 1e-9

    def test_semiclassical_grid_matches_reduced_correlation(self):
        model = semiclassical_lhv_model()
        for a, b in zip(_random_axes(47, 20), _random_axes(48, 20)):
            want = -a.dot(b) / 3.0
            assert lhv_expectation(model, a, b) == pytest.approx(want, abs=1e-12)

    def test_semiclassical_canonical_chsh(self):
        model = semiclassical_lhv_model()
        axes = [coplanar_axis(math.radians(t)) for t in (0.0, 45.0, 90.0, -45.0)]
        k, ok = lhv_chsh_audit(model, *axes)
        assert ok
        assert k == pytest.approx(TWO_SQRT_TWO / 3.0, abs=1e-9)

    def test_weight_guard(self):
        lam = np.zeros((2, 3))
        lam[0, 2] = 1.0
        lam[1, 0] = 1.0
        with pytest.raises(PreconditionError):
            LhvModel(lam, np.array([0.5, 0.6]), lambda a, l: 0.5, lambda b, l: 0.5)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6))
    def test_audit_verdict_matches_bound(self, seed):
        model = random_lhv_model(RandomStream(seed, 7), 8)
        rng = RandomStream(seed, 8)
        axes = [sample_isotropic_direction(rng) for _ in range(4)]
        k, ok = lhv_chsh_audit(model, *axes)
        assert ok == (k <= 2.0 + 1e-9)


class TestBipartite:
    def test_singlet_coefficients(self):
        s = singlet_coefficients()
        assert s.a.shape == (2, 2)
        assert bipartite_joint(s, 0, 1) == pytest.approx(0.5)
        assert bipartite_joint(s, 0, 0) == pytest.approx(0.0, abs=1e-15)

    def test_joint_sums_to_one(self):
        rng = np.random.default_rng(5)
        m = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
        coeffs = BipartiteCoefficients.normalized(m)
        total = sum(
            bipartite_joint(coeffs, i, j) for i in range(4) for j in range(6)
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_norm_guard(self):
        with pytest.raises(PreconditionError):
            BipartiteCoefficients(np.eye(2), 1.0)

    def test_dimension_cap(self):
        with pytest.raises(PreconditionError):
            BipartiteCoefficients.normalized(np.ones((65, 2)))

    def test_basis_change_preserves_norm(self):
        rng = np.random.default_rng(6)
        m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        coeffs = BipartiteCoefficients.normalized(m)
        q, r = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        changed = basis_change(coeffs, q)
        total = float(changed.C**2 * np.sum(np.abs(changed.a) ** 2))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_basis_change_rejects_nonunitary(self):
        coeffs = singlet_coefficients()
        with pytest.raises(PreconditionError):
            basis_change(coeffs, np.array([[1.0, 0.0], [0.0, 2.0]]))

    def test_no_signaling_routes_agree(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            d1, d2 = rng.integers(2, 9), rng.integers(2, 9)
            m = rng.normal(size=(d1, d2)) + 1j * rng.normal(size=(d1, d2))
            coeffs = BipartiteCoefficients.normalized(m)
            q, r = np.linalg.qr(
                rng.normal(size=(d1, d1)) + 1j * rng.normal(size=(d1, d1))
            )
            sign = 1 if trial % 2 == 0 else -1
            out = no_signaling_audit(coeffs, q, int(rng.integers(0, d2)), sign=sign)
            assert out[3] < 1e-10
            assert out[0] == pytest.approx(out[2], abs=1e-10)

    def test_no_signaling_on_singlet(self):
        theta = 0.4
        u = np.array(
            [
                [math.cos(theta), -math.sin(theta)],
                [math.sin(theta), math.cos(theta)],
            ]
        )
        out = no_signaling_audit(singlet_coefficients(), u, 0, sign=-1)
        assert out[3] < 1e-12
        assert out[0] == pytest.approx(0.5, abs=1e-12)
