import json
import warnings

import numpy as np
import pytest

from projlab import classical as cl
from projlab import meanforce as mf
from projlab import zwanzig as zw

GRID = mf.BinGrid.phase_space(1, 5.0, 64)


@pytest.fixture(autouse=True)
def _quiet_empty_bins():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", mf.EmptyBinWarning)
        yield


def _field(func, grid=GRID):
    c = grid.centers()
    return mf.BinnedField(grid, func(c[..., 0], c[..., 1]), np.full(grid.shape, 1e-3),
                          np.full(grid.shape, 100))


def _bin_at(q, p, grid=GRID):
    return np.unravel_index(grid.index(np.array([[q, p]]))[0], grid.shape)


class TestProjection:
    def test_constant_is_exact(self, harmonic_samples):
        P = zw.zwanzig_project(lambda x: np.ones(len(x)), harmonic_samples, GRID)
        pop = P.counts > 0
        assert np.all(P.values[pop] == 1.0)

    def test_function_of_relevant_variables(self, harmonic_samples):
        P = zw.zwanzig_project(lambda x: x[:, 0] ** 2, harmonic_samples, GRID)
        q = GRID.centers()[..., 0]
        pop = P.counts > 0
        h = GRID.widths[0]
        assert np.abs(P.values[pop] - q[pop] ** 2).max() <= h * np.abs(q[pop]).max() + h ** 2

    def test_environment_coordinate_conditional_mean(self, harmonic_samples):
        P = zw.zwanzig_project(lambda x: x[:, 1], harmonic_samples, GRID)
        q = GRID.centers()[..., 0]
        m = P.counts >= 25
        z = (P.values - (-0.5 * q))[m] / P.stderr[m]
        assert np.mean(np.abs(z) <= 3) >= 0.95

    def test_idempotent_on_samples(self, harmonic_samples):
        P1 = zw.zwanzig_project(lambda x: x[:, 1] ** 3, harmonic_samples, GRID)
        P2 = zw.zwanzig_project(P1.on_samples(harmonic_samples), harmonic_samples, GRID)
        m = P1.counts > 0
        assert np.allclose(P1.values[m], P2.values[m])

    def test_pythagoras(self, harmonic_samples):
        total, pb, qb = zw.pythagoras(lambda x: x[:, 1] * x[:, 3], harmonic_samples, GRID)
        assert np.isclose(total, pb + qb, rtol=1e-10)

    def test_adjoint_of_equilibrium_is_one(self, harmonic_samples):
        f = zw.zwanzig_adjoint(np.ones(len(harmonic_samples)), harmonic_samples, GRID)
        assert np.allclose(f.values[f.counts > 0], 1.0)

    def test_adjoint_reproduces_marginal_average(self, harmonic_samples):
        # P^dagger mu has the same statistics as mu for every function of the bin of A
        w = np.exp(0.3 * harmonic_samples.points[:, 1])
        f = zw.zwanzig_adjoint(w, harmonic_samples, GRID)
        A = harmonic_samples.relevant()
        flat = GRID.index(A)
        inside = flat >= 0
        centers = GRID.centers().reshape(-1, 2)[flat[inside], 0]
        lhs = zw.weighted_mean(centers ** 3, w[inside])
        rhs = zw.weighted_mean(centers ** 3, f.lookup(A[inside]))
        assert np.isclose(lhs, rhs, rtol=1e-10)


class TestDrift:
    def test_conditional_drift_near_unit_displacement(self, harmonic_samples):
        cd = zw.conditional_drift(harmonic_samples, GRID, cl.harmonic_pair(c=0.5))
        idx = _bin_at(1.0, 0.0)
        q, p = GRID.centers()[idx]
        expected = np.array([p, -0.75 * q])
        assert np.all(np.abs(cd.values[idx] - expected) <= 3 * cd.stderr[idx] + 1e-12)

    def test_uncoupled_drift(self, uncoupled_samples):
        cd = zw.conditional_drift(uncoupled_samples, GRID, cl.harmonic_pair(c=0.0))
        m = cd.counts > 0
        c = GRID.centers()
        # both components are linear in (q, p), so bin averages equal the bin-mean point
        A = uncoupled_samples.relevant()
        means = [zw.zwanzig_project(A[:, j], uncoupled_samples, GRID).values for j in (0, 1)]
        assert np.allclose(cd.values[..., 0][m], means[1][m])
        assert np.allclose(cd.values[..., 1][m], -means[0][m])
        assert np.all(np.abs(means[0][m] - c[..., 0][m]) <= GRID.widths[0] / 2)

    def test_hmf_drift_quadratic(self):
        dh = zw.drift_from_hmf(_field(lambda q, p: 0.375 * q ** 2 + 0.5 * p ** 2))
        idx = _bin_at(1.0, 0.0)
        q, p = GRID.centers()[idx]
        assert np.allclose(dh.values[idx], [p, -0.75 * q])

    def test_hmf_drift_flat(self):
        dh = zw.drift_from_hmf(_field(lambda q, p: 0 * q))
        assert np.allclose(dh.values, 0)

    def test_hmf_drift_free_streaming(self):
        dh = zw.drift_from_hmf(_field(lambda q, p: 0.5 * p ** 2))
        c = GRID.centers()
        central = dh.meta["central"]
        assert np.allclose(dh.values[..., 0][central], c[..., 1][central])
        assert np.allclose(dh.values[..., 1][central], 0)

    @pytest.mark.parametrize("fixture", ["harmonic_samples", "uncoupled_samples"])
    def test_residual_report(self, fixture, request):
        S = request.getfixturevalue(fixture)
        c = 0.5 if fixture == "harmonic_samples" else 0.0
        rep = zw.drift_residual_report(S, GRID, cl.harmonic_pair(c=c), scenario_id="unit")
        assert rep.acceptance_fraction >= 0.95
        assert 0.7 < rep.chi2 / rep.dof < 1.3
        payload = json.loads(rep.to_json())
        assert {"scenario", "grid", "bins", "chi2", "acceptance_fraction"} <= set(payload)
        assert len(rep.to_csv().splitlines()) == rep.n_bins + 1


class TestRelevantDensity:
    def test_equilibrium_bracket_vanishes(self, harmonic_samples):
        hmf = mf.estimate_hmf(harmonic_samples, GRID)
        p = zw.equilibrium_density(harmonic_samples, GRID)
        bracket = zw.relevant_density_drift(p, hmf)
        mask = mf.interior_mask(hmf.populated) & (hmf.counts >= 25)
        frac, _ = zw.field_z_fraction(bracket, mask)
        assert frac >= 0.95

    def test_uniform_density(self):
        hmf = _field(lambda q, p: 0.5 * q ** 2 + 0.5 * p ** 2)
        p = _field(lambda q, p: 0 * q + 0.01)
        assert np.allclose(zw.relevant_density_drift(p, hmf).values[hmf.counts > 0], 0)

    def test_equilibrium_time_derivative_vanishes(self, harmonic_samples):
        dp = zw.density_time_derivative(harmonic_samples, cl.harmonic_pair(c=0.5), GRID, dt=1e-2)
        mask = dp.counts >= 25
        assert zw.field_z_fraction(dp, mask)[0] >= 0.95
        assert dp.meta["halving_fraction_within_3"] >= 0.95

    def test_displaced_uncoupled_transport(self, uncoupled_samples):
        sys_ = cl.harmonic_pair(c=0.0)
        pts = uncoupled_samples.points + np.array([1.5, 0.0, 0.0, 0.0])
        S = cl.SampleSet.from_points(pts, 1.0, (0, 2), chain_index=uncoupled_samples.chain_index)
        dp = zw.density_time_derivative(S, sys_, GRID, delta=0.05, dt=1e-2, check_halving=False)
        grid_c = mf.BinGrid.phase_space(1, 5.0, 32)
        dpc = zw.density_time_derivative(S, sys_, grid_c, delta=0.05, dt=1e-2, check_halving=False)
        # analytic Liouville transport of the displaced Gaussian marginal: -p dp/dq + q dp/dp
        c = grid_c.centers()
        q, p = c[..., 0], c[..., 1]
        rho = np.exp(-0.5 * (q - 1.5) ** 2 - 0.5 * p ** 2) / (2 * np.pi)
        exact = rho * (p * (q - 1.5) - q * p)
        m = dpc.counts >= 50
        z = (dpc.values - exact)[m] / dpc.stderr[m]
        assert np.mean(np.abs(z) <= 3) >= 0.9
        assert dp.values.shape == GRID.shape


class TestMori:
    def test_fixed_point(self, harmonic_samples):
        nc = zw.norm_compare(lambda x: x[:, 0], harmonic_samples, GRID, lambda A: A[..., 0])
        # q_S snapped to bin centers lies in both ranges
        assert abs(nc.zwanzig_norm - nc.mori_norm) < 1e-3

    def test_gaussian_conditional_mean_is_linear(self, harmonic_samples):
        nc = zw.norm_compare(lambda x: x[:, 1], harmonic_samples, GRID, lambda A: A[..., 0])
        assert nc.zwanzig_norm >= nc.mori_norm
        assert abs(nc.zwanzig_norm - nc.mori_norm) < 0.02

    def test_zwanzig_dominates_nonlinear(self, harmonic_samples):
        nc = zw.norm_compare(lambda x: x[:, 1] ** 2 + x[:, 0] ** 3, harmonic_samples, GRID,
                             lambda A: A[..., 0])
        assert nc.margin > 3

    def test_mori_projection_coefficient(self, harmonic_samples):
        vals, coef = zw.mori_project(lambda x: 2 * x[:, 0], lambda A: A[..., 0], harmonic_samples)
        assert np.isclose(coef, 2 * np.sqrt(np.mean(harmonic_samples.points[:, 0] ** 2)))

    def test_zero_phi_rejected(self, harmonic_samples):
        with pytest.raises(ValueError):
            zw.mori_project(lambda x: x[:, 0], lambda A: 0 * A[..., 0], harmonic_samples)

    def test_random_polynomial_is_deterministic(self):
        a = zw.random_polynomial(np.random.default_rng(1), 4)
        b = zw.random_polynomial(np.random.default_rng(1), 4)
        x = np.random.default_rng(2).normal(size=(5, 4))
        assert np.array_equal(a(x), b(x))
