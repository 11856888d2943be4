import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamlab.errors import InvalidInput
from pamlab.torus import (
    FOUR_PI2,
    GridSpec,
    LatticeField,
    ModeSet,
    SpectralField,
    WalkMeasure,
    apply_discrete_laplacian,
    apply_stencil_laplacian,
    dft_lattice,
    dft_lattice_naive,
    extension_eval,
    fold_mode,
    heat_semigroup,
    idft_lattice,
    laplacian_symbol,
    multiplier_f,
    pi_N,
    product_coeffs,
    projector_PK,
    validate_walk_measure,
)

odd_N = st.sampled_from([3, 5, 7, 9, 11, 15])
NN = WalkMeasure.nearest_neighbor()


def random_field(N, seed, real=True):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((N, N))
    if not real:
        v = v + 1j * rng.standard_normal((N, N))
    return LatticeField(GridSpec(N), v)


class TestGrid:
    def test_epsilon(self):
        g = GridSpec(27)
        assert g.epsilon * g.N == pytest.approx(2 * np.pi, abs=1e-15)

    @pytest.mark.parametrize("bad", [2, 4, 1, 0, -3])
    def test_rejects_even_or_small(self, bad):
        with pytest.raises(InvalidInput):
            GridSpec(bad)

    def test_modeset(self):
        m = ModeSet(5)
        assert len(m) == 25
        ks = {tuple(k) for k in m.modes}
        assert all((-a, -b) in ks for a, b in ks)
        assert (2, -2) in m and (3, 0) not in m

    def test_site_order_row_major(self):
        g = GridSpec(3)
        assert g.sites()[:3].tolist() == [[-1, -1], [-1, 0], [-1, 1]]
        assert g.site_index((0, 0)) == 4


class TestWalkMeasure:
    def test_nearest_neighbor_passes(self):
        rep = validate_walk_measure(NN)
        assert rep.passed
        assert rep.as_dict()["second_moments_two"]["value"] == (2.0, 2.0)

    def test_single_atom_fails(self):
        rep = validate_walk_measure(WalkMeasure({(1, 0): 1.0}))
        assert not rep.passed
        assert "total_mass_zero" in rep.failures()
        assert "radial" in rep.failures()

    def test_range_two(self):
        # 2a + 8b = 2 from the second moment: sum j1^2 mu = 2a + 2*4b
        a = 0.6
        b = (2 - 2 * a) / 8
        assert validate_walk_measure(WalkMeasure.range_two(a, b)).passed
        assert not validate_walk_measure(WalkMeasure.range_two(0.6, 0.2)).passed

    def test_empty(self):
        with pytest.raises(InvalidInput):
            validate_walk_measure(WalkMeasure({}))

    def test_require_names_failure(self):
        with pytest.raises(InvalidInput, match="radial"):
            validate_walk_measure(WalkMeasure({(1, 0): 2.0, (-1, 0): 2.0, (0, 0): -4.0})).require()


class TestDFT:
    def test_constant(self):
        g = GridSpec(7)
        c = np.array(dft_lattice(LatticeField.constant(g, 2.5)).coeffs)
        assert c[3, 3] == pytest.approx(FOUR_PI2 * 2.5, rel=1e-12)
        c[3, 3] = 0
        assert np.abs(c).max() < 1e-12

    def test_plane_wave(self):
        g = GridSpec(9)
        k0 = (3, -2)
        phi = LatticeField.from_function(g, lambda x1, x2: np.exp(1j * (k0[0] * x1 + k0[1] * x2)))
        c = dft_lattice(phi)
        expected = SpectralField.single_mode(g, k0, FOUR_PI2).coeffs
        assert np.abs(c.coeffs - expected).max() < 1e-10

    @given(odd_N, st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_round_trip(self, N, seed):
        phi = random_field(N, seed, real=False)
        back = idft_lattice(dft_lattice(phi)).values
        assert np.abs(back - phi.values).max() <= 1e-10 * np.abs(phi.values).max()

    @pytest.mark.parametrize("N", [3, 5, 9, 15])
    def test_naive_oracle(self, N):
        phi = random_field(N, N, real=False)
        assert np.abs(dft_lattice(phi).coeffs - dft_lattice_naive(phi).coeffs).max() < 1e-10

    @pytest.mark.parametrize("N", [3, 9, 27])
    def test_diagonalization(self, N):
        g = GridSpec(N)
        pts = g.points()
        for k in g.sites():
            s = np.exp(1j * pts @ k).sum()
            target = N * N if not k.any() else 0.0
            assert abs(s - target) <= 1e-9

    def test_real_field_hermitian(self):
        assert dft_lattice(random_field(11, 3)).is_real()


class TestExtension:
    def test_constant(self):
        g = GridSpec(5)
        one = dft_lattice(LatticeField.constant(g, 1.0))
        x = np.random.default_rng(0).uniform(0, 7, size=(10, 2))
        assert np.allclose(extension_eval(one, x), 1.0)

    @given(odd_N, st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_interpolates(self, N, seed):
        phi = random_field(N, seed, real=False)
        vals = extension_eval(dft_lattice(phi), phi.grid.points())
        assert np.abs(vals - phi.flat).max() <= 1e-10

    def test_real_extension(self):
        phi = random_field(9, 1)
        x = np.random.default_rng(1).uniform(-10, 10, size=(50, 2))
        assert np.abs(extension_eval(dft_lattice(phi), x).imag).max() < 1e-12

    def test_periodic_reduction(self):
        phi_hat = dft_lattice(random_field(5, 2))
        x = np.array([0.4, 1.3])
        assert extension_eval(phi_hat, x) == pytest.approx(extension_eval(phi_hat, x + 2 * np.pi * np.array([3, -2])))


class TestFolding:
    @pytest.mark.parametrize("k,expected", [((3, 0), (-2, 0)), ((2, -2), (2, -2)), ((7, -6), (2, -1))])
    def test_fold_mode(self, k, expected):
        assert tuple(fold_mode(k, 5)) == expected

    @given(st.integers(-50, 50), st.integers(-50, 50), odd_N)
    def test_fold_properties(self, a, b, N):
        m = fold_mode((a, b), N)
        assert np.all(np.abs(m) < N / 2)
        assert (m[0] - a) % N == 0 and (m[1] - b) % N == 0

    def test_identity_on_modeset(self):
        phi_hat = dft_lattice(random_field(7, 0))
        assert np.array_equal(pi_N(phi_hat).coeffs, phi_hat.coeffs)

    def test_single_mode_fold(self):
        g = GridSpec(3)
        c = np.zeros((5, 5), dtype=complex)
        c[2 + 2, 2] = 1.5  # mode (2, 0) in a box of side 5
        out = pi_N(SpectralField(g, c))
        assert out.coeff((-1, 0)) == 1.5
        assert np.count_nonzero(out.coeffs) == 1

    @pytest.mark.parametrize("N", [5, 9, 27])
    def test_product_identity(self, N):
        phi, psi = random_field(N, 1, real=False), random_field(N, 2, real=False)
        prod = SpectralField(phi.grid, product_coeffs(dft_lattice(phi).coeffs, dft_lattice(psi).coeffs))
        vals = idft_lattice(pi_N(prod)).values
        target = phi.values * psi.values
        assert np.abs(vals - target).max() <= 1e-9 * np.abs(target).max()


class TestProjector:
    def test_identity(self):
        phi_hat = dft_lattice(random_field(9, 0))
        assert np.array_equal(projector_PK(phi_hat, 9).coeffs, phi_hat.coeffs)

    def test_idempotent(self):
        phi_hat = dft_lattice(random_field(9, 0))
        once = projector_PK(phi_hat, 5)
        assert np.array_equal(projector_PK(once, 5).padded(9).coeffs, once.padded(9).coeffs)

    def test_P3_keeps_nine(self):
        phi_hat = dft_lattice(random_field(9, 4))
        out = projector_PK(phi_hat, 3).padded(9).coeffs
        assert np.count_nonzero(out) == 9
        assert np.array_equal(out[3:6, 3:6], phi_hat.coeffs[3:6, 3:6])

    def test_K_too_large(self):
        with pytest.raises(InvalidInput):
            projector_PK(dft_lattice(random_field(5, 0)), 7)


class TestMultiplier:
    def test_origin(self):
        assert multiplier_f(np.zeros(2), NN) == 1.0
        assert multiplier_f(np.array([1e-6, -2e-6]), NN) == pytest.approx(1.0, abs=1e-9)

    def test_corner(self):
        assert multiplier_f(np.array([np.pi, np.pi]), NN) == pytest.approx(4 / np.pi**2, rel=1e-12)

    @pytest.mark.parametrize("mu", [NN, WalkMeasure.range_two(0.6, 0.1)])
    def test_positive_on_grid(self, mu):
        a = np.linspace(-np.pi, np.pi, 201)
        X = np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1)
        assert multiplier_f(X, mu).min() > 0

    def test_symbol_matches_f(self):
        g = GridSpec(9)
        ks = g.sites().astype(float)
        sym = laplacian_symbol(g, NN).reshape(-1)
        assert np.allclose(sym, -np.sum(ks**2, axis=1) * multiplier_f(g.epsilon * ks, NN), atol=1e-12)


class TestLaplacian:
    def test_constant_annihilated(self):
        g = GridSpec(5)
        out = apply_discrete_laplacian(dft_lattice(LatticeField.constant(g, 3.0)), NN)
        assert np.abs(out.coeffs).max() < 1e-12

    def test_single_mode_eigen(self):
        g = GridSpec(9)
        k0 = (2, -3)
        u = SpectralField.single_mode(g, k0, 1.0)
        lam = -13 * multiplier_f(g.epsilon * np.array(k0, float), NN)
        assert apply_discrete_laplacian(u, NN).coeff(k0) == pytest.approx(lam, rel=1e-12)

    @pytest.mark.parametrize("mu", [NN, WalkMeasure.range_two(0.6, 0.1)])
    def test_stencil_oracle(self, mu):
        phi = random_field(5, 7)
        spec = idft_lattice(apply_discrete_laplacian(dft_lattice(phi), mu)).values
        direct = apply_stencil_laplacian(phi, mu).values
        assert np.abs(spec - direct).max() <= 1e-10 * np.abs(direct).max()

    def test_symmetry(self):
        phi, psi = random_field(9, 1), random_field(9, 2)
        a = np.vdot(apply_stencil_laplacian(phi, NN).values, psi.values)
        b = np.vdot(phi.values, apply_stencil_laplacian(psi, NN).values)
        assert abs(a - b) <= 1e-9 * abs(a)


class TestHeat:
    def test_zero_time(self):
        u = dft_lattice(random_field(7, 0))
        assert np.array_equal(heat_semigroup(u, 0.0, NN).coeffs, u.coeffs)

    def test_semigroup(self):
        u = dft_lattice(random_field(9, 0))
        a = heat_semigroup(heat_semigroup(u, 1.0, NN), 1.0, NN).coeffs
        b = heat_semigroup(u, 2.0, NN).coeffs
        assert np.abs(a - b).max() < 1e-12

    def test_mean_preserved(self):
        u = dft_lattice(random_field(9, 0))
        assert heat_semigroup(u, 3.0, NN).coeff((0, 0)) == pytest.approx(u.coeff((0, 0)), rel=1e-14)

    def test_negative_time(self):
        with pytest.raises(InvalidInput):
            heat_semigroup(dft_lattice(random_field(5, 0)), -0.1, NN)
