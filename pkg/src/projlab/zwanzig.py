"""
Classical Zwanzig projector on a binned relevant-observable space.

With the canonical weight, the projector maps an observable ``B`` to its
conditional expectation given the bin of ``A``. All averages are Monte Carlo
averages over a :class:`~projlab.classical.SampleSet`; on that empirical
measure the binned projector is an exact orthogonal projection.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .classical import (ClassicalSystem, Observable, SampleSet, liouvillian_drift, propagate,
                        relevant_observables)
from .meanforce import (BinGrid, BinnedField, EmptyBinWarning, estimate_hmf, histogram_density,
                        mean_force, resolve_inefficiency)


def _observable_values(B, samples: SampleSet) -> np.ndarray:
    if callable(B):
        return np.asarray(B(samples.points), dtype=float)
    B = np.asarray(B, dtype=float)
    if B.shape[0] != len(samples):
        raise ValueError("per-sample values do not match the sample count")
    return B


def _binned_means(values, flat, n_bins, weights=None):
    """Weighted per-bin means, counts and sample variances of 1-d or 2-d ``values``."""
    values = np.asarray(values, dtype=float)
    vec = values.ndim == 2
    v = values if vec else values[:, None]
    ok = flat >= 0
    f = flat[ok]
    v = v[ok]
    w = np.ones(len(f)) if weights is None else np.asarray(weights, float)[ok]
    counts = np.bincount(f, minlength=n_bins)
    wsum = np.bincount(f, weights=w, minlength=n_bins)
    means = np.stack([np.bincount(f, weights=w * v[:, j], minlength=n_bins)
                      for j in range(v.shape[1])], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = means / wsum[:, None]
        dev = v - means[f]
        var = np.stack([np.bincount(f, weights=w * dev[:, j] ** 2, minlength=n_bins)
                        for j in range(v.shape[1])], axis=-1) / wsum[:, None]
    empty = counts == 0
    means[empty] = np.nan
    var[empty] = np.nan
    if not vec:
        means, var = means[:, 0], var[:, 0]
    return means, counts, var


@dataclass(frozen=True)
class ProjectedObservable:
    """``P B`` as per-bin conditional expectations (``NaN`` in empty bins)."""

    grid: BinGrid
    values: np.ndarray
    counts: np.ndarray
    stderr: np.ndarray
    weight: str = "canonical"

    def __call__(self, relevant_values) -> np.ndarray:
        """Evaluate ``P B`` as a function of ``A`` (a piecewise-constant function)."""
        flat = self.grid.index(relevant_values)
        out = np.full(len(flat), np.nan)
        ok = flat >= 0
        out[ok] = self.values.reshape(-1)[flat[ok]]
        return out

    def on_samples(self, samples: SampleSet) -> np.ndarray:
        return self(samples.relevant())

    def as_field(self) -> BinnedField:
        return BinnedField(self.grid, self.values, self.stderr, self.counts,
                           meta={"kind": "projection", "weight": self.weight})


def zwanzig_project(B, samples: SampleSet, grid: BinGrid, weights=None,
                    weight_label: str = "canonical", inefficiency=None) -> ProjectedObservable:
    """Zwanzig projection ``Tr(rho psi_a B) / Tr(rho psi_a)`` per bin.

    ``B`` is a callable on phase points or an array of per-sample values.
    The weight ``rho`` is the distribution the samples were drawn from, or
    that distribution reweighted by the per-sample ``weights``.
    """
    vals = _observable_values(B, samples)
    flat = grid.index(samples.relevant())
    means, counts, var = _binned_means(vals, flat, grid.size, weights)
    g = resolve_inefficiency(samples, grid, inefficiency)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(g * var / counts)
    if np.any(counts == 0):
        warnings.warn(f"{int((counts == 0).sum())} empty bin(s) in projection",
                      EmptyBinWarning, stacklevel=2)
    return ProjectedObservable(grid, means.reshape(grid.shape), counts.reshape(grid.shape),
                               se.reshape(grid.shape), weight_label)


def zwanzig_adjoint(mu_ratio, samples: SampleSet, grid: BinGrid) -> BinnedField:
    """Adjoint projection of a density ``mu = w * rho`` given ``w = mu / rho`` per sample.

    Returns the per-bin factor ``Tr(psi_a mu) / Tr(psi_a rho)`` so that
    ``P^dagger mu = rho * factor(A)``.
    """
    w = _observable_values(mu_ratio, samples)
    flat = grid.index(samples.relevant())
    means, counts, var = _binned_means(w, flat, grid.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(resolve_inefficiency(samples, grid) * var / counts)
    return BinnedField(grid, means.reshape(grid.shape), se.reshape(grid.shape),
                       counts.reshape(grid.shape), meta={"kind": "adjoint_factor"})


def weighted_mean(values, weights=None) -> float:
    """``Tr(rho X)`` as a (weighted) sample average."""
    values = np.asarray(values, float)
    if weights is None:
        return float(values.mean())
    weights = np.asarray(weights, float)
    return float(np.sum(weights * values) / np.sum(weights))


# ---------------------------------------------------------------------------
# drift terms
# ---------------------------------------------------------------------------

def conditional_drift(samples: SampleSet, grid: BinGrid, system: ClassicalSystem,
                      observables=None, inefficiency=None) -> BinnedField:
    """Per-bin average of ``iL A = {A, H}`` over the samples in the bin."""
    obs = relevant_observables(system) if observables is None else list(observables)
    drift = liouvillian_drift(obs, samples.points, system)
    flat = grid.index(samples.relevant())
    means, counts, var = _binned_means(drift, flat, grid.size)
    g = resolve_inefficiency(samples, grid, inefficiency)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(g * var / counts[:, None])
    k = drift.shape[1]
    return BinnedField(grid, means.reshape(grid.shape + (k,)), se.reshape(grid.shape + (k,)),
                       counts.reshape(grid.shape),
                       components=tuple(getattr(o, "name", str(i)) for i, o in enumerate(obs)),
                       meta={"kind": "conditional_drift"})


def _symplectic_apply(grad: np.ndarray) -> np.ndarray:
    """``J v`` for ``v`` laid out as (q-block, p-block) on the last axis."""
    n = grad.shape[-1] // 2
    return np.concatenate([grad[..., n:], -grad[..., :n]], axis=-1)


def drift_from_hmf(hmf: BinnedField) -> BinnedField:
    """``{A, H*}(alpha) = J grad_alpha H*`` for ``A`` canonical (q-block then p-block)."""
    if hmf.grid.ndim % 2:
        raise ValueError("the relevant observables must form canonical (q, p) pairs")
    mf = mean_force(hmf)
    vals = _symplectic_apply(mf.values)
    errs = _symplectic_apply(np.abs(mf.stderr))
    return BinnedField(hmf.grid, vals, np.abs(errs), hmf.counts,
                       components=tuple(hmf.grid.labels),
                       meta={"kind": "hmf_drift", "central": mf.meta["central"]})


@dataclass
class DriftResidualReport:
    """Bin-by-bin comparison of the conditional drift with ``{A, H*}``."""

    grid: BinGrid
    residual: np.ndarray
    sigma: np.ndarray
    conditional: np.ndarray
    from_hmf: np.ndarray
    counts: np.ndarray
    mask: np.ndarray
    acceptance_fraction: float
    chi2: float
    dof: int
    z_threshold: float
    components: tuple
    scenario_id: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def n_bins(self) -> int:
        return int(self.mask.sum())

    def records(self) -> list[dict]:
        centers = self.grid.centers()
        out = []
        for idx in zip(*np.nonzero(self.mask)):
            rec = {"bin": [int(i) for i in idx],
                   "center": [float(x) for x in centers[idx]],
                   "count": int(self.counts[idx])}
            for j, c in enumerate(self.components):
                rec[f"conditional_{c}"] = float(self.conditional[idx][j])
                rec[f"hmf_{c}"] = float(self.from_hmf[idx][j])
                rec[f"residual_{c}"] = float(self.residual[idx][j])
                rec[f"sigma_{c}"] = float(self.sigma[idx][j])
            out.append(rec)
        return out

    def summary(self) -> dict:
        return {"scenario": self.scenario_id, "n_bins": self.n_bins,
                "acceptance_fraction": self.acceptance_fraction, "chi2": self.chi2,
                "dof": self.dof, "z_threshold": self.z_threshold, **self.extras}

    def to_json(self) -> str:
        payload = {**self.summary(), "grid": self.grid.to_dict(), "bins": self.records()}
        return json.dumps(payload, sort_keys=True, indent=1)

    def to_csv(self) -> str:
        recs = self.records()
        cols = list(self.grid.labels) + ["count"]
        for c in self.components:
            cols += [f"conditional_{c}", f"hmf_{c}", f"residual_{c}", f"sigma_{c}"]
        lines = [",".join(cols)]
        for r in recs:
            row = [repr(x) for x in r["center"]] + [str(r["count"])]
            for c in self.components:
                row += [repr(r[f"{k}_{c}"]) for k in ("conditional", "hmf", "residual", "sigma")]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def compare_fields(a: BinnedField, b: BinnedField, mask=None, z: float = 3.0):
    """Per-bin z-test of two vector fields; returns (residual, sigma, mask, fraction, chi2, dof)."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    res = a.values - b.values
    sig = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
    ok = np.all(np.isfinite(res) & np.isfinite(sig) & (sig > 0), axis=-1) if res.ndim > a.grid.ndim \
        else np.isfinite(res) & np.isfinite(sig) & (sig > 0)
    if mask is not None:
        ok &= mask
    if not np.any(ok):
        return res, sig, ok, float("nan"), float("nan"), 0
    zz = np.abs(res[ok]) / sig[ok]
    within = np.all(zz <= z, axis=-1) if zz.ndim > 1 else zz <= z
    chi2 = float(np.sum(zz ** 2))
    return res, sig, ok, float(within.mean()), chi2, int(zz.size)


def drift_residual_report(samples: SampleSet, grid: BinGrid, system: ClassicalSystem,
                          hmf: BinnedField | None = None, min_count: int = 25,
                          z: float = 3.0, scenario_id: str = "") -> DriftResidualReport:
    """Compare the conditional drift with ``{A, H*}`` on populated interior bins.

    A bin enters the comparison when it holds at least ``min_count`` samples
    and the mean-force gradient there is a central difference. The
    acceptance fraction counts bins whose every component lies within ``z``
    combined standard errors.
    """
    g = resolve_inefficiency(samples, grid)
    hmf = estimate_hmf(samples, grid, inefficiency=g) if hmf is None else hmf
    cd = conditional_drift(samples, grid, system, inefficiency=g)
    dh = drift_from_hmf(hmf)
    mask = (cd.counts >= min_count) & dh.meta["central"]
    res, sig, ok, frac, chi2, dof = compare_fields(cd, dh, mask, z)
    return DriftResidualReport(grid, res, sig, cd.values, dh.values, cd.counts, ok, frac, chi2,
                               dof, z, tuple(grid.labels), scenario_id,
                               extras={"inefficiency": g, "min_count": min_count})


# ---------------------------------------------------------------------------
# relevant density
# ---------------------------------------------------------------------------

def relevant_density_drift(p_field: BinnedField, hmf: BinnedField) -> BinnedField:
    """Drift contribution to ``dp/dt``: ``{H*, p}_alpha = -grad p . J grad H*``.

    This is the transport of ``p(alpha, t)`` by the mean-force flow
    ``J grad H*``; for ``H* = H_S`` with no coupling it is the full Liouville
    equation of the marginal.
    """
    if p_field.grid != hmf.grid:
        raise ValueError("p and H* live on different grids")
    from .meanforce import gradient_field
    p_pop = p_field.values.copy()
    gp = gradient_field(BinnedField(p_field.grid, p_pop, p_field.stderr,
                                    np.maximum(p_field.counts, 1)))
    gh = mean_force(hmf)
    Jgh = _symplectic_apply(gh.values)
    Jgh_err = np.abs(_symplectic_apply(gh.stderr))
    vals = -np.sum(gp.values * Jgh, axis=-1)
    err = np.sqrt(np.sum((gp.stderr * Jgh) ** 2 + (gp.values * Jgh_err) ** 2, axis=-1))
    counts = np.where(hmf.populated, p_field.counts, 0)
    return BinnedField(p_field.grid, vals, err, counts,
                       meta={"kind": "density_drift", "time": p_field.meta.get("time")})


def density_time_derivative(initial: SampleSet, system: ClassicalSystem, grid: BinGrid,
                            t: float = 0.0, delta: float = 0.05, dt: float = 1e-3,
                            check_halving: bool = True) -> BinnedField:
    """Symmetric finite-difference ``dp/dt`` at time ``t`` from the evolved ensemble.

    Errors come from the per-sample bin transitions between ``t - delta`` and
    ``t + delta`` (the same points are followed, so the noise of ``p`` itself
    cancels). With ``check_halving`` the estimate is repeated at ``delta / 2``
    and the discrepancy, in units of its statistical error, is stored in
    ``meta["halving_max_z"]``.
    """
    g_ineff = resolve_inefficiency(initial, grid)

    def estimate(d):
        idx = list(initial.relevant_indices)
        base = propagate(initial.points, system, t, dt) if t else initial.points
        plus = propagate(base, system, d, dt)
        minus = propagate(base, system, -d, dt)
        fp = grid.index(plus[:, idx])
        fm = grid.index(minus[:, idx])
        n_in = 0.5 * ((fp >= 0).sum() + (fm >= 0).sum())
        gained = np.bincount(fp[fp >= 0], minlength=grid.size).astype(float)
        lost = np.bincount(fm[fm >= 0], minlength=grid.size).astype(float)
        moved = fp != fm
        traffic = (np.bincount(fp[moved & (fp >= 0)], minlength=grid.size)
                   + np.bincount(fm[moved & (fm >= 0)], minlength=grid.size))
        scale = 1.0 / (n_in * grid.volume * 2 * d)
        dpdt = (gained - lost) * scale
        se = np.sqrt(g_ineff * traffic) * scale
        counts = np.bincount(grid.index(base[:, idx])[grid.index(base[:, idx]) >= 0],
                             minlength=grid.size)
        return dpdt.reshape(grid.shape), se.reshape(grid.shape), counts.reshape(grid.shape)

    dpdt, se, counts = estimate(delta)
    meta = {"kind": "dp_dt", "time": float(t), "delta": float(delta), "inefficiency": g_ineff}
    if check_halving:
        d2, s2, _ = estimate(delta / 2)
        both = (se > 0) | (s2 > 0)
        zz = np.abs(dpdt - d2)[both] / np.sqrt(se ** 2 + s2 ** 2)[both]
        meta["halving_max_z"] = float(np.max(zz)) if zz.size else 0.0
        meta["halving_fraction_within_3"] = float(np.mean(zz <= 3.0)) if zz.size else 1.0
    return BinnedField(grid, dpdt, se, counts, meta=meta)


def equilibrium_density(samples: SampleSet, grid: BinGrid) -> BinnedField:
    counts, p, se, _, frac_in = histogram_density(samples.relevant(), grid,
                                                  resolve_inefficiency(samples, grid))
    return BinnedField(grid, p, se, counts, meta={"kind": "p_alpha_t", "time": 0.0,
                                                  "escape_fraction": 1 - frac_in})


def field_z_fraction(field: BinnedField, mask=None, z: float = 3.0):
    """Fraction of bins where ``|value| <= z * stderr`` (a zero-consistency test), and chi^2/dof."""
    ok = np.isfinite(field.values) & np.isfinite(field.stderr) & (field.stderr > 0)
    if mask is not None:
        ok &= mask
    zz = np.abs(field.values[ok]) / field.stderr[ok]
    if zz.size == 0:
        return float("nan"), float("nan")
    return float(np.mean(zz <= z)), float(np.mean(zz ** 2))


# ---------------------------------------------------------------------------
# Mori versus Zwanzig
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormComparison:
    zwanzig_norm: float
    mori_norm: float
    difference_stderr: float
    per_chain: np.ndarray

    @property
    def margin(self) -> float:
        """``||P^Z B|| - ||P^M B||`` in units of its standard error."""
        d = self.zwanzig_norm - self.mori_norm
        if self.difference_stderr == 0:
            return np.inf if d >= 0 else -np.inf
        return d / self.difference_stderr


def _discretize(phi, samples, grid):
    """Snap a function of ``A`` to bin centers so it lies in the binned Zwanzig range."""
    A = samples.relevant()
    flat = grid.index(A)
    centers = grid.centers().reshape(grid.size, grid.ndim)
    snapped = np.where((flat >= 0)[:, None], centers[np.maximum(flat, 0)], A)
    return np.asarray(phi(snapped), dtype=float)


def mori_project(B, phi, samples: SampleSet, grid: BinGrid | None = None, mask=None):
    """Mori projection ``(B, phi) phi`` onto a single observable under ``(X, Y) = Tr(rho X Y)``.

    ``phi`` is a function of the relevant values ``A``; it is normalized here.
    If ``grid`` is given, ``phi`` is evaluated at bin centers so that its range
    sits inside the binned Zwanzig range. Returns per-sample values of the
    projection and the coefficient ``(B, phi_normalized)``.
    """
    b = _observable_values(B, samples)
    f = _discretize(phi, samples, grid) if grid is not None else np.asarray(
        phi(samples.relevant()), dtype=float)
    if mask is not None:
        b, f = b[mask], f[mask]
    norm = np.sqrt(np.mean(f * f))
    if norm < 1e-12:
        raise ValueError("phi has (numerically) zero norm")
    f = f / norm
    coef = float(np.mean(b * f))
    return coef * f, coef


def _norms(b, flat_in, f, n_bins):
    means, counts, _ = _binned_means(b, flat_in, n_bins)
    pz = means[flat_in]
    z = np.sqrt(np.mean(pz * pz))
    f = f / np.sqrt(np.mean(f * f))
    m = abs(np.mean(b * f))
    return z, m


def norm_compare(B, samples: SampleSet, grid: BinGrid, phi) -> NormComparison:
    """``(||P^Z B||, ||P^M B||)`` under the canonical weight, with a chain batch-means error."""
    b = _observable_values(B, samples)
    flat = grid.index(samples.relevant())
    inside = flat >= 0
    f = _discretize(phi, samples, grid)
    z, m = _norms(b[inside], flat[inside], f[inside], grid.size)
    per_chain = []
    for c in np.unique(samples.chain_index):
        sel = inside & (samples.chain_index == c)
        zc, mc = _norms(b[sel], flat[sel], f[sel], grid.size)
        per_chain.append((zc, mc))
    per_chain = np.array(per_chain)
    if len(per_chain) > 1:
        diff = per_chain[:, 0] - per_chain[:, 1]
        se = float(np.std(diff, ddof=1) / np.sqrt(len(diff)))
    else:
        se = float("nan")
    return NormComparison(float(z), float(m), se, per_chain)


def pythagoras(B, samples: SampleSet, grid: BinGrid):
    """``(||B||^2, ||PB||^2, ||QB||^2)`` on the samples inside the grid."""
    b = _observable_values(B, samples)
    flat = grid.index(samples.relevant())
    inside = flat >= 0
    b, flat = b[inside], flat[inside]
    means, _, _ = _binned_means(b, flat, grid.size)
    pb = means[flat]
    return float(np.mean(b * b)), float(np.mean(pb * pb)), float(np.mean((b - pb) ** 2))


def random_polynomial(rng: np.random.Generator, dim: int, degree: int = 3, n_terms: int = 6) -> Observable:
    """Random polynomial phase function with ``n_terms`` monomials of total degree <= ``degree``."""
    powers = []
    while len(powers) < n_terms:
        p = rng.integers(0, degree + 1, size=dim)
        if 0 < p.sum() <= degree:
            powers.append(p)
    powers = np.array(powers)
    coef = rng.normal(size=n_terms)

    def func(x):
        x = np.asarray(x, float)
        return np.sum(coef * np.prod(x[..., None, :] ** powers, axis=-1), axis=-1)

    return Observable(func, name=f"poly(deg<={degree}, terms={n_terms})")
