import numpy as np
import pytest

from projlab import classical as cl
from projlab import meanforce as mf
from projlab.harness.pipelines import compare_with_quadrature

GRID = mf.BinGrid.phase_space(1, 5.0, 64)


def _analytic_field(func, grid=GRID):
    c = grid.centers()
    vals = func(c[..., 0], c[..., 1])
    return mf.BinnedField(grid, vals, np.full(grid.shape, 0.01), np.full(grid.shape, 100))


@pytest.fixture(scope="module")
def hmf_pair(harmonic_samples):
    return mf.estimate_hmf(harmonic_samples, GRID)


class TestGrid:
    def test_index_and_centers(self):
        g = mf.BinGrid.symmetric([1.0], bins=8)
        assert np.allclose(g.axis_centers(0), np.arange(-0.875, 1.0, 0.25))
        assert list(g.index(np.array([[-0.9], [0.1], [2.0]]))) == [0, 4, -1]

    def test_too_few_bins(self):
        with pytest.raises(ValueError, match="at least"):
            mf.BinGrid.symmetric([1.0], bins=4)

    def test_csv_round_trip(self, hmf_pair):
        back = mf.BinnedField.from_csv(hmf_pair.to_csv(), GRID)
        m = hmf_pair.populated
        assert np.allclose(back.values[m], hmf_pair.values[m])
        assert np.array_equal(back.counts, hmf_pair.counts)


class TestHistogramHMF:
    def test_effective_spring_constant(self, hmf_pair):
        M, _, _, cov = mf.fit_quadratic(hmf_pair, hmf_pair.counts >= 25)
        se = np.sqrt(cov[3, 3])
        assert abs(M[0, 0] - 0.75) < max(3 * se, 0.02 * 0.75)
        assert abs(M[1, 1] - 1.0) < 0.03  # inverse mass from the kinetic term

    def test_uncoupled_recovers_bare_hamiltonian(self, uncoupled_samples):
        field = mf.estimate_hmf(uncoupled_samples, GRID)
        M, _, _, _ = mf.fit_quadratic(field, field.counts >= 25)
        assert np.allclose(np.diag(M), [1.0, 1.0], atol=0.03)

    def test_chi_square_of_pair_against_oracle(self, hmf_pair):
        oracle = cl.gaussian_hmf_oracle(cl.harmonic_pair(c=0.5))(GRID.centers())
        res = compare_with_quadrature(hmf_pair, oracle, 25)
        assert res["fraction_within"] >= 0.95
        assert 0.7 < res["chi2_per_bin"] < 1.4

    def test_free_energy_regauged(self, hmf_pair):
        _, _, c0, _ = mf.fit_quadratic(hmf_pair, hmf_pair.counts >= 25)
        with pytest.warns(mf.EmptyBinWarning):
            f_est = mf.free_energy(hmf_pair, 1.0) - c0
        oracle = cl.gaussian_hmf_oracle(cl.harmonic_pair(c=0.5))
        f_or = cl.QuadraticHMF(oracle.masses, oracle.stiffness, 0.0).free_energy(1.0)
        assert abs(f_est - f_or) < 0.02

    def test_too_few_samples_is_a_resolution_error(self):
        S = cl.sample_canonical(cl.harmonic_pair(), 1.0, 200, seed=1, burn_in=200)
        with pytest.raises(mf.ResolutionError):
            mf.estimate_hmf(S, GRID)

    def test_binned_inefficiency_near_one_for_thinned_chains(self, harmonic_samples):
        g = mf.binned_inefficiency(harmonic_samples, GRID)
        assert 0.7 < g < 1.6


class TestQuadratureOracle:
    def test_harmonic_limit_matches_gaussian(self):
        grid = mf.BinGrid.phase_space(1, 4.0, 16)
        q = mf.quadrature_hmf(cl.harmonic_pair(c=0.5), 1.0, grid, bin_average=False)
        exact = cl.gaussian_hmf_oracle(cl.harmonic_pair(c=0.5))(grid.centers())
        d = q - exact
        assert np.ptp(d) < 1e-8  # equal up to the additive gauge

    def test_quartic_histogram_against_quadrature(self):
        sys_ = cl.quartic_pair(lam=0.1)
        grid = mf.BinGrid.phase_space(1, 5.0, 32)
        S = cl.sample_canonical(sys_, 1.0, 100_000, seed=21)
        field = mf.estimate_hmf(S, grid)
        res = compare_with_quadrature(field, mf.quadrature_hmf(sys_, 1.0, grid), 25)
        assert res["fraction_within"] >= 0.95


class TestGradient:
    def test_quadratic_slope(self):
        grad = mf.gradient_field(_analytic_field(lambda q, p: 0.375 * q ** 2 + 0.5 * p ** 2))
        q = GRID.centers()[..., 0]
        central = grad.meta["central"]
        assert np.allclose(grad.values[..., 0][central], 0.75 * q[central], rtol=0.03)

    def test_flat_field(self):
        grad = mf.gradient_field(_analytic_field(lambda q, p: 0 * q + 2.0))
        assert np.allclose(grad.values, 0.0)

    def test_symmetric_field_has_antisymmetric_gradient(self, hmf_pair):
        sym = mf.BinnedField(GRID, 0.5 * (hmf_pair.values + hmf_pair.values[::-1, ::-1]),
                             hmf_pair.stderr, np.minimum(hmf_pair.counts, hmf_pair.counts[::-1, ::-1]))
        with np.errstate(invalid="ignore"):
            grad = mf.gradient_field(sym)
        both = np.isfinite(grad.values) & np.isfinite(grad.values[::-1, ::-1])
        assert np.allclose(grad.values[both], -grad.values[::-1, ::-1][both])

    def test_error_propagation(self):
        grad = mf.gradient_field(_analytic_field(lambda q, p: q))
        h = GRID.widths[0]
        assert np.allclose(grad.stderr[..., 0][grad.meta["central"]], np.sqrt(2) * 0.01 / (2 * h))


class TestDensityEvolution:
    def test_time_zero_is_the_initial_histogram(self, harmonic_samples):
        f0 = mf.estimate_p_alpha_t(harmonic_samples, cl.harmonic_pair(), GRID, [0.0])[0]
        counts, p, _, _, _ = mf.histogram_density(harmonic_samples.relevant(), GRID)
        assert np.array_equal(f0.counts, counts)
        assert np.array_equal(f0.values, p)

    def test_stationarity(self, harmonic_samples):
        sub = cl.SampleSet.from_points(harmonic_samples.points[::4], 1.0, harmonic_samples.relevant_indices,
                                       chain_index=harmonic_samples.chain_index[::4])
        f0, f1 = mf.estimate_p_alpha_t(sub, cl.harmonic_pair(), GRID, [0.0, 1.0], dt=1e-2)
        m = (f0.counts >= 25) & (f1.counts >= 25)
        z = (f1.values - f0.values)[m] / np.hypot(f0.stderr, f1.stderr)[m]
        assert np.mean(np.abs(z) <= 3) >= 0.95

    def test_displaced_mean_follows_normal_modes(self, harmonic_samples):
        sys_ = cl.harmonic_pair()
        pts = harmonic_samples.points[::4] + np.array([1.0, 0.0, 0.0, 0.0])
        S = cl.SampleSet.from_points(pts, 1.0, harmonic_samples.relevant_indices)
        times = [0.0, 0.7, 1.5]
        fields = mf.estimate_p_alpha_t(S, sys_, GRID, times, dt=1e-2)
        centers = GRID.centers().reshape(-1, 2)
        for t, f in zip(times, fields):
            w = f.values.reshape(-1) * GRID.volume
            mean_q = np.sum(w * centers[:, 0])
            exact = (cl.normal_mode_propagator(sys_, t) @ pts.mean(axis=0))[0]
            se = np.sqrt(mf.binned_inefficiency(S, GRID) * np.sum(w * centers[:, 0] ** 2) / len(pts))
            # binning adds a width^2/12 variance but no bias for a symmetric cloud
            assert abs(mean_q - exact) < 3 * se + 1e-3

    def test_escape_is_a_coverage_error(self):
        pts = np.zeros((400, 2))
        pts[:, 1] = 10.0
        S = cl.SampleSet.from_points(pts, 1.0, (0, 1))
        with pytest.raises(mf.CoverageError):
            mf.estimate_p_alpha_t(S, cl.free_particle(), mf.BinGrid.phase_space(1, 5.0, 8), [0.0, 1.0])
