import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrcv.covmodel import SpectralDistribution, esd
from specrcv.errors import BadGridError
from specrcv.spectra import (
    DensityCurve,
    StieltjesGrid,
    empirical_stieltjes,
    histogram,
    kolmogorov_distance,
    levy_distance,
)

from .oracles import brute_levy, naive_stieltjes


def _point(loc, p=1):
    return SpectralDistribution(np.full(p, float(loc)))


class TestKolmogorov:
    def test_identical_is_zero(self):
        f = SpectralDistribution(np.array([0.5, 1.0, 2.5]))
        assert kolmogorov_distance(f, f) == 0.0

    def test_disjoint_points_is_one(self):
        assert kolmogorov_distance(_point(0.0), _point(1.0)) == 1.0

    def test_half_mass_split(self):
        f = esd(np.diag([1.0, 2.0]))
        assert kolmogorov_distance(f, _point(1.0)) == pytest.approx(0.5)

    def test_symmetric(self):
        f = SpectralDistribution(np.array([0.0, 1.0, 3.0]))
        g = SpectralDistribution(np.array([0.5, 2.0]))
        assert kolmogorov_distance(f, g) == kolmogorov_distance(g, f)

    def test_against_density_curve(self):
        # A curve that matches the uniform CDF on [0, 1] closely.
        xs = np.linspace(0.0, 1.0, 2001)
        curve = DensityCurve(xs, np.ones_like(xs), 0.0)
        atoms = SpectralDistribution((np.arange(1000) + 0.5) / 1000)
        assert kolmogorov_distance(atoms, curve) < 0.002
        assert kolmogorov_distance(curve, curve) == 0.0


class TestLevy:
    def test_identical_is_zero(self):
        f = SpectralDistribution(np.array([1.0, 2.0]))
        assert levy_distance(f, f) == pytest.approx(0.0, abs=2e-6)

    def test_shifted_point_bound(self):
        eps = 0.25
        d = levy_distance(_point(0.0), _point(eps))
        assert 0.0 < d <= eps + 1e-6

    def test_matches_bruteforce_on_random_atoms(self):
        rng = np.random.default_rng(12)
        for trial in range(5):
            f = SpectralDistribution(rng.uniform(0.0, 3.0, size=20))
            g = SpectralDistribution(rng.uniform(0.0, 3.0, size=20))
            assert levy_distance(f, g) == pytest.approx(brute_levy(f, g), abs=1e-5)

    def test_never_exceeds_kolmogorov(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            f = SpectralDistribution(rng.uniform(0.0, 2.0, size=15))
            g = SpectralDistribution(rng.uniform(0.0, 2.0, size=8))
            assert levy_distance(f, g) <= kolmogorov_distance(f, g) + 1e-6


class TestEmpiricalStieltjes:
    def test_zero_matrix_at_i(self):
        grid = empirical_stieltjes(_point(0.0), np.array([1j]))
        assert grid.values[0] == pytest.approx(1j)

    def test_single_unit_atom(self):
        grid = empirical_stieltjes(_point(1.0), np.array([2j]))
        assert grid.values[0] == pytest.approx(1.0 / (1.0 - 2j))

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(21)
        f = SpectralDistribution(rng.uniform(0.0, 5.0, size=100))
        zs = rng.uniform(-1.0, 6.0, size=30) + 1j * rng.uniform(0.05, 2.0, size=30)
        grid = empirical_stieltjes(f, zs)
        want = naive_stieltjes(f.eigenvalues, zs)
        assert np.max(np.abs(grid.values - want)) <= 1e-12

    def test_upper_half_plane_and_bound(self):
        rng = np.random.default_rng(8)
        f = SpectralDistribution(rng.uniform(0.0, 2.0, size=64))
        zs = np.linspace(-1.0, 3.0, 41) + 0.3j
        grid = empirical_stieltjes(f, zs)
        assert np.all(grid.values.imag > 0.0)
        assert np.all(np.abs(grid.values) <= 1.0 / 0.3 + 1e-12)

    def test_conjugate_symmetry_via_oracle(self):
        # m(conj z) = conj(m(z)); the implementation requires Im z > 0, so
        # mirror through the naive oracle which accepts the lower half plane.
        rng = np.random.default_rng(5)
        lam = rng.uniform(0.0, 4.0, size=50)
        zs = np.array([0.7 + 0.2j, -1.0 + 1.5j, 3.3 + 0.01j])
        upper = empirical_stieltjes(SpectralDistribution(lam), zs)
        lower = naive_stieltjes(lam, np.conj(zs))
        assert np.allclose(np.conj(upper.values), lower, atol=1e-12)

    def test_tail_limit(self):
        rng = np.random.default_rng(2)
        for trial in range(5):
            lam = rng.uniform(0.0, 10.0, size=30)
            f = SpectralDistribution(lam)
            for v in (1e2, 1e3):
                m = empirical_stieltjes(f, np.array([1j * v])).values[0]
                assert abs(1j * v * m + 1.0) <= lam.max() / v + 1e-15

    def test_rejects_lower_half_plane(self):
        f = _point(1.0)
        with pytest.raises(BadGridError):
            empirical_stieltjes(f, np.array([1.0 - 0.5j]))
        with pytest.raises(BadGridError):
            empirical_stieltjes(f, np.array([1.0 + 0.0j]))


class TestHistogram:
    def test_equal_atoms_single_bin(self):
        curve = histogram(_point(1.0, p=50))
        occupied = np.flatnonzero(curve.ys > 0.0)
        assert occupied.size >= 1
        assert curve.xs[occupied].min() == pytest.approx(1.0, abs=0.1)
        assert curve.xs[occupied].max() == pytest.approx(1.0, abs=0.1)
        assert curve.mass_at_zero == 0.0

    def test_all_zero_atoms(self):
        curve = histogram(_point(0.0, p=10))
        assert curve.mass_at_zero == 1.0
        assert np.all(curve.ys == 0.0)

    def test_normalization_budget(self):
        rng = np.random.default_rng(44)
        # Marchenko-Pastur-like sample: squared singular values of a tall
        # Gaussian matrix.
        g = rng.normal(size=(400, 100)) / np.sqrt(400)
        curve = histogram(esd(g.T @ g))
        total = np.trapezoid(curve.ys, curve.xs) + curve.mass_at_zero
        assert abs(total - 1.0) <= 0.03

    def test_rank_deficient_zero_mass(self):
        rng = np.random.default_rng(9)
        g = rng.normal(size=(50, 100))
        curve = histogram(esd(g.T @ g / 50))
        assert curve.mass_at_zero == pytest.approx(0.5, abs=1e-12)

    def test_minimum_bin_count(self):
        rng = np.random.default_rng(1)
        f = SpectralDistribution(rng.uniform(1.0, 2.0, size=200))
        curve = histogram(f)
        assert np.count_nonzero(curve.ys > 0) >= 15


class TestDensityCurve:
    def test_mass_budget_enforced(self):
        xs = np.linspace(0.0, 1.0, 11)
        with pytest.raises(ValueError):
            DensityCurve(xs, np.full(11, 2.0), 0.0)

    def test_cdf_with_atom(self):
        xs = np.linspace(1.0, 2.0, 101)
        curve = DensityCurve(xs, np.full(101, 0.5), 0.5)
        assert curve.cdf(0.5) == pytest.approx(0.5)
        assert curve.cdf(1.5) == pytest.approx(0.75, abs=1e-6)
        assert curve.cdf(3.0) == pytest.approx(1.0, abs=1e-6)

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            DensityCurve(np.array([0.0, 0.5, 0.5]), np.zeros(3), 0.0)


atom_lists = st.lists(
    st.floats(0.0, 100.0, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(atom_lists, atom_lists)
def test_distance_properties(xs, ys):
    f = SpectralDistribution(np.array(xs))
    g = SpectralDistribution(np.array(ys))
    k_fg = kolmogorov_distance(f, g)
    l_fg = levy_distance(f, g)
    assert 0.0 <= k_fg <= 1.0
    assert k_fg == kolmogorov_distance(g, f)
    assert l_fg == pytest.approx(levy_distance(g, f), abs=2e-6)
    assert l_fg <= k_fg + 2e-6
    if sorted(xs) == sorted(ys):
        assert k_fg == 0.0


@settings(max_examples=50, deadline=None)
@given(atom_lists, st.floats(0.05, 5.0))
def test_stieltjes_bound_property(xs, v):
    f = SpectralDistribution(np.array(xs))
    zs = np.array([0.5 + 1j * v, 50.0 + 1j * v])
    grid = empirical_stieltjes(f, zs)
    assert np.all(grid.values.imag > 0.0)
    assert np.all(np.abs(grid.values) <= 1.0 / v + 1e-9)


def test_stieltjes_grid_validation():
    xs = np.array([1.0, 2.0])
    zs = xs + 0.1j
    ms = np.array([0.1j, 0.2j])
    grid = StieltjesGrid(zs, ms)
    assert np.array_equal(grid.zs, zs)
    with pytest.raises(BadGridError):
        StieltjesGrid(xs - 0.1j, ms)
