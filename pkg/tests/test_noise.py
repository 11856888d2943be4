import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamlab import noise
from pamlab.errors import InvalidInput, UnreliableEstimate
from pamlab.torus import (
    FOUR_PI2,
    GridSpec,
    SpectralField,
    WalkMeasure,
    extension_eval,
    laplacian_symbol,
    multiplier_f,
)

NN = WalkMeasure.nearest_neighbor()
GAUSS = noise.PotentialSpec()


def en_for(N, seed, spec=GAUSS, mu=None):
    return noise.enhanced_noise(noise.sample_potential(spec, GridSpec(N), seed), mu)


class TestPotentialSpec:
    @pytest.mark.parametrize("dist,p,expected", [
        ("gaussian", 4, 3.0),
        ("gaussian", 8, 105.0),
        ("uniform", 2, 1.0),
        ("uniform", 4, 9.0 / 5.0),
        ("rademacher", 8, 1.0),
    ])
    def test_absolute_moment(self, dist, p, expected):
        assert noise.absolute_moment(dist, p) == pytest.approx(expected, rel=1e-12)

    def test_default_M(self):
        assert noise.PotentialSpec(p=8.0).M == pytest.approx(105.0)

    def test_low_order_rejected(self):
        with pytest.raises(InvalidInput, match="exceed 6"):
            noise.PotentialSpec(p=6.0)

    def test_M_too_small(self):
        with pytest.raises(InvalidInput, match="exceeds the declared bound"):
            noise.PotentialSpec(M=10.0)

    def test_tabulated(self):
        s = noise.PotentialSpec(distribution="tabulated", table=([-2.0, 0.5], [0.2, 0.8]))
        assert s.M == pytest.approx(0.2 * 2**8 + 0.8 * 0.5**8)
        with pytest.raises(InvalidInput, match="mean 0"):
            noise.PotentialSpec(distribution="tabulated", table=([-1.0, 2.0], [0.5, 0.5]))
        with pytest.raises(InvalidInput, match="table"):
            noise.PotentialSpec(distribution="tabulated")

    def test_unknown(self):
        with pytest.raises(InvalidInput):
            noise.PotentialSpec(kind="markov")
        with pytest.raises(InvalidInput):
            noise.PotentialSpec(distribution="cauchy")


class TestPotential:
    def test_reproducible(self):
        g = GridSpec(9)
        a = noise.sample_potential(GAUSS, g, 42).values
        b = noise.sample_potential(GAUSS, g, 42).values
        c = noise.sample_potential(GAUSS, g, 43).values
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_read_only(self):
        eta = noise.sample_potential(GAUSS, GridSpec(5), 0)
        with pytest.raises(ValueError):
            eta.values[0, 0] = 1.0

    def test_enumeration(self):
        g = GridSpec(3)
        order = (8, 7, 6, 5, 4, 3, 2, 1, 0)
        a = noise.sample_potential(GAUSS, g, 1).values.ravel()
        b = noise.sample_potential(noise.PotentialSpec(enumeration=order), g, 1).values.ravel()
        assert np.array_equal(a[::-1], b)
        with pytest.raises(InvalidInput, match="permutation"):
            noise.sample_potential(noise.PotentialSpec(enumeration=(0, 0, 1, 2, 3, 4, 5, 6, 7)), g, 1)

    def test_martingale_moments(self):
        spec = noise.PotentialSpec(kind="martingale", distribution="uniform")
        x = noise.disorder_values(spec, 50, np.random.default_rng(0), batch=20_000)
        # conditional on the sign of the previous value: mean 0, variance 1
        prev_pos = x[:, :-1] >= 0
        for mask in (prev_pos, ~prev_pos):
            v = x[:, 1:][mask]
            se = v.std() / np.sqrt(v.size)
            assert abs(v.mean()) < 4 * se
            assert abs(np.mean(v**2) - 1) < 0.02

    def test_martingale_sign_rule(self):
        draws = np.array([[-1.0, 2.0, -3.0, 4.0]])
        # sigma = (+1, sign(-1), sign(2), sign(-3))
        assert noise._sign_flip(draws).tolist() == [[-1.0, -2.0, -3.0, -4.0]]

    def test_constant(self):
        eta = noise.Potential.constant(GridSpec(5), 0.3)
        assert eta.sample_mean == pytest.approx(0.3) and eta.sample_variance == pytest.approx(0.0)


class TestConstants:
    def test_c3(self):
        assert noise.renorm_constant_cN(3) == pytest.approx(6 / FOUR_PI2, rel=1e-12)

    def test_c5_hand_sum(self):
        # ring |k|_inf = 2: four at 1/4, eight at 1/5, four at 1/8
        assert noise.renorm_constant_cN(5) == pytest.approx((6 + 1 + 1.6 + 0.5) / FOUR_PI2, rel=1e-12)

    def test_c1_and_bad(self):
        assert noise.renorm_constant_cN(1) == 0.0
        with pytest.raises(InvalidInput):
            noise.renorm_constant_cN(4)

    def test_cK_even(self):
        # |k|_inf < 2 is the same set as for K = 3
        assert noise.renorm_constant_cK(4) == noise.renorm_constant_cK(3)

    def test_log_growth(self):
        m = 5
        r = (noise.renorm_constant_cN(3 ** (m + 1)) - noise.renorm_constant_cN(3**m)) * 2 * np.pi / np.log(3)
        assert 0.9 <= r <= 1.1

    @pytest.mark.parametrize("N", [3, 9, 27])
    def test_tilde_dominates(self, N):
        # f <= 1 for the nearest-neighbour walk, so c_tilde >= c
        assert noise.renorm_constant_tilde(N, NN) >= noise.renorm_constant_cN(N)

    def test_tilde_direct(self):
        N = 7
        g = GridSpec(N)
        total = 0.0
        for k in g.sites():
            if k.any():
                total += 1.0 / (float(k @ k) * multiplier_f(g.epsilon * k.astype(float), NN))
        assert noise.renorm_constant_tilde(N, NN) == pytest.approx(total / FOUR_PI2, rel=1e-12)

    def test_tilde_K_difference_shrinks(self):
        diffs = [abs(noise.renorm_constant_cK(K) - noise.renorm_constant_tilde(K * K, NN, K)) for K in (3, 5, 7, 9)]
        assert all(b < a for a, b in zip(diffs, diffs[1:]))


class TestEnhancedNoise:
    @pytest.mark.parametrize("N", [5, 9, 27])
    def test_poisson_identity(self, N):
        en = en_for(N, 3)
        sym = -laplacian_symbol(en.grid, NN)
        lhs = en.X.coeffs * sym
        rhs = np.array(en.xi.coeffs)
        rhs[en.grid.half, en.grid.half] = 0
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()
        assert en.X.coeff((0, 0)) == 0

    def test_xi_scaling(self):
        g = GridSpec(9)
        eta = noise.sample_potential(GAUSS, g, 0)
        en = noise.enhanced_noise(eta)
        assert np.allclose(en.xi_lattice(), eta.values / g.epsilon, atol=1e-10)

    def test_area_shift(self):
        en = en_for(9, 0)
        d = en.resonant - en.area
        assert d.coeff((0, 0)) == pytest.approx(FOUR_PI2 * en.c_tilde_N, rel=1e-12)
        assert en.resonant.size == 2 * 9 - 1

    @pytest.mark.parametrize("N,seed", [(3, 0), (5, 1), (5, 2)])
    def test_quadratic_form_oracle(self, N, seed):
        en = en_for(N, seed)
        x = np.array([0.37, -1.1])
        Q = noise.resonant_quadratic_form(en.grid, NN, x)
        eta = en.potential.values.ravel()
        direct = extension_eval(en.resonant, x).real
        assert eta @ Q @ eta == pytest.approx(direct, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("N", [3, 5, 7])
    def test_trace_is_c_tilde(self, N):
        # for centred unit-variance disorder E[(X o xi)(x)] = tr Q, which must equal c_tilde
        Q = noise.resonant_quadratic_form(GridSpec(N), NN, np.array([0.2, 0.9]))
        assert np.trace(Q) == pytest.approx(noise.renorm_constant_tilde(N, NN), rel=1e-10)

    def test_sidecar(self):
        s = en_for(5, 11).sidecar()
        assert s["N"] == 5 and s["seed"] == 11 and s["spec"]["distribution"] == "gaussian"

    def test_bad_walk(self):
        bad = WalkMeasure({(1, 0): 1.0, (-1, 0): 1.0, (0, 0): -2.0})
        with pytest.raises(InvalidInput):
            en_for(5, 0, mu=bad)

    def test_coarse_warns(self):
        en = en_for(9, 0)
        with pytest.warns(UnreliableEstimate):
            noise.coarse_resonant(en, 5)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            noise.coarse_resonant(en, 3)
        with pytest.raises(InvalidInput):
            noise.coarse_resonant(en, 11)

    def test_cauchy_decreasing_in_K(self):
        en = en_for(81, 0)
        d = [noise.cauchy_diagnostic(en, K, -0.5) for K in (3, 5, 9)]
        assert all(np.isfinite(d))

    def test_block_values_sum(self):
        en = en_for(9, 4)
        x = np.array([1.0, 2.0])
        total = noise.block_values_at(en.area, x, en.partition).sum()
        assert total == pytest.approx(extension_eval(en.area, x).real, rel=1e-10)


class TestRandomOperator:
    @given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=10, deadline=None)
    def test_linearity(self, seed, a, b):
        en = en_for(9, 5)
        rng = np.random.default_rng(seed)
        u = noise.regular_test_field(en.grid, 0.75, rng)
        v = noise.regular_test_field(en.grid, 0.75, rng)
        lhs = noise.random_operator_apply(u * a + v * b, en).coeffs
        rhs = (noise.random_operator_apply(u, en) * a + noise.random_operator_apply(v, en) * b).coeffs
        assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())

    def test_unit_norm_test_field(self):
        from pamlab.besov import holder_besov_norm
        u = noise.regular_test_field(GridSpec(9), 0.75, np.random.default_rng(0))
        assert holder_besov_norm(u, 0.75, 1.0) == pytest.approx(1.0, rel=1e-10)
        assert u.is_real()

    def test_alpha_range(self):
        with pytest.raises(InvalidInput):
            noise.random_operator_norm_estimate(en_for(5, 0), 0.4, 3)

    def test_rejects_wide_input(self):
        en = en_for(5, 0)
        with pytest.raises(InvalidInput):
            noise.random_operator_apply(SpectralField.zeros(GridSpec(5)).padded(9), en)

    def test_zero_input(self):
        en = en_for(9, 0)
        out = noise.random_operator_apply(SpectralField.zeros(en.grid), en)
        assert np.abs(out.coeffs).max() == 0

    def test_estimate_nonnegative_deterministic(self):
        en = en_for(9, 1)
        a = noise.random_operator_norm_estimate(en, 0.75, 5, seed=3)
        assert a >= 0 and a == noise.random_operator_norm_estimate(en, 0.75, 5, seed=3)


class TestWhiteNoise:
    def test_pairing_linear(self):
        g = GridSpec(9)
        etas = np.random.default_rng(0).standard_normal((4, 9, 9))
        phi = lambda x1, x2: np.cos(x1) * np.sin(2 * x2)
        s = noise.white_noise_pairing(etas, g, phi)
        direct = [g.epsilon * sum(e[i, j] * phi(*g.points().reshape(9, 9, 2)[i, j]) for i in range(9) for j in range(9))
                  for e in etas]
        assert np.allclose(s, direct, atol=1e-12)

    def test_exact_variance_riemann(self):
        # Var S_N = eps^2 sum phi(eps l)^2, a Riemann sum for the integral of phi^2
        g = GridSpec(81)
        phi = lambda x1, x2: np.cos(x1) * np.sin(2 * x2)
        vals = phi(*g.points().T)
        assert g.epsilon**2 * np.sum(vals**2) == pytest.approx(np.pi**2, rel=1e-12)

    def test_clt_variance_se(self):
        x = np.array([1.0, -1.0] * 50)
        s2, se = noise.clt_variance_se(x)
        assert s2 == pytest.approx(100 / 99)
        # m4 = 1 and s2^2 ~ 1.02 give a clipped zero
        assert se == pytest.approx(0.0, abs=1e-12)
