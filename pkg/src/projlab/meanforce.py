"""
Histogram estimators over the space of relevant-observable values.

Each bin of a :class:`BinGrid` is the indicator of a top-hat window around
its center; the bins partition the covered region, so projections built on
them are exactly idempotent. Empty bins carry ``NaN`` and are masked out of
every downstream quantity.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .classical import ClassicalSystem, SampleSet, propagate

MIN_BINS = 8
MAX_TOTAL_BINS = 10 ** 6


class EmptyBinWarning(RuntimeWarning):
    pass


class CoverageError(ValueError):
    def __init__(self, message, escape_fraction=None):
        super().__init__(message)
        self.escape_fraction = escape_fraction


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class BinGrid:
    """Regular grid over the relevant observables, one ``(min, max, bins)`` per axis."""

    mins: tuple
    maxs: tuple
    bins: tuple
    labels: tuple = ()

    def __post_init__(self):
        mins = tuple(float(v) for v in np.atleast_1d(self.mins))
        maxs = tuple(float(v) for v in np.atleast_1d(self.maxs))
        bins = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(self.bins), (len(mins),)))
        if len(mins) != len(maxs):
            raise ValueError("mins and maxs differ in length")
        for lo, hi, n in zip(mins, maxs, bins):
            if not lo < hi:
                raise ValueError(f"need min < max, got ({lo}, {hi})")
            if n < MIN_BINS:
                raise ValueError(f"need at least {MIN_BINS} bins per axis, got {n}")
        if int(np.prod(bins)) > MAX_TOTAL_BINS:
            raise ValueError(f"grid has more than {MAX_TOTAL_BINS} bins")
        labels = tuple(self.labels) or tuple(f"a{i}" for i in range(len(mins)))
        if len(labels) != len(mins):
            raise ValueError("one label per axis required")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def symmetric(cls, half_widths, bins=64, labels=()):
        half_widths = np.atleast_1d(half_widths).astype(float)
        return cls(tuple(-half_widths), tuple(half_widths), bins, labels)

    @classmethod
    def phase_space(cls, n_system: int = 1, half_width: float = 5.0, bins: int = 64):
        """Grid over ``Gamma_S = (q_S..., p_S...)`` with the canonical labels."""
        labels = [f"q_S{i}" for i in range(n_system)] + [f"p_S{i}" for i in range(n_system)]
        return cls.symmetric([half_width] * 2 * n_system, bins, labels)

    @property
    def ndim(self) -> int:
        return len(self.mins)

    @property
    def shape(self) -> tuple:
        return self.bins

    @property
    def size(self) -> int:
        return int(np.prod(self.bins))

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.maxs) - np.array(self.mins)) / np.array(self.bins)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.mins[axis], self.maxs[axis], self.bins[axis] + 1)

    def axis_centers(self, axis: int) -> np.ndarray:
        e = self.edges(axis)
        return 0.5 * (e[1:] + e[:-1])

    def centers(self) -> np.ndarray:
        """Bin centers, shape ``grid.shape + (ndim,)``."""
        mesh = np.meshgrid(*[self.axis_centers(i) for i in range(self.ndim)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def index(self, values) -> np.ndarray:
        """Flat bin index of each row of ``values``; ``-1`` outside the grid."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[-1] != self.ndim:
            raise ValueError(f"values have {values.shape[-1]} columns, grid has {self.ndim} axes")
        idx = np.floor((values - np.array(self.mins)) / self.widths).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.bins)), axis=-1)
        idx = np.clip(idx, 0, np.array(self.bins) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), self.bins)
        return np.where(inside, flat, -1)

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "maxs": list(self.maxs),
                "bins": list(self.bins), "labels": list(self.labels)}


@dataclass(frozen=True)
class BinnedField:
    """Scalar or vector field on a grid, with per-bin counts and standard errors.

    ``values`` has shape ``grid.shape`` (scalar) or ``grid.shape + (k,)``.
    ``offset`` records a constant removed from ``values`` (the gauge shift).
    """

    grid: BinGrid
    values: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    offset: float = 0.0
    components: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def populated(self) -> np.ndarray:
        v = self.values if self.values.ndim == self.grid.ndim else self.values[..., 0]
        return np.isfinite(v) & (self.counts > 0)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.ndim + 1

    def raw_values(self) -> np.ndarray:
        return self.values + self.offset

    def lookup(self, points) -> np.ndarray:
        """Field value at the bin containing each point (``NaN`` outside or empty)."""
        flat = self.grid.index(points)
        vals = self.values.reshape((self.grid.size,) + self.values.shape[self.grid.ndim:])
        out = np.full((len(flat),) + vals.shape[1:], np.nan)
        ok = flat >= 0
        out[ok] = vals[flat[ok]]
        return out

    def to_csv(self) -> str:
        """Columns: bin-center coordinates (grid labels), value(s), std-error(s), count."""
        comps = self.components or (
            tuple(f"{i}" for i in range(self.values.shape[-1])) if self.is_vector else ())
        header = list(self.grid.labels)
        if self.is_vector:
            header += [f"value_{c}" for c in comps] + [f"stderr_{c}" for c in comps]
        else:
            header += ["value", "stderr"]
        header.append("count")
        centers = self.grid.centers().reshape(self.grid.size, self.grid.ndim)
        nv = self.values.reshape(self.grid.size, -1)
        ns = self.stderr.reshape(self.grid.size, -1)
        counts = self.counts.reshape(-1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for i in range(self.grid.size):
            row = [_fmt(x) for x in centers[i]] + [_fmt(x) for x in nv[i]] + [_fmt(x) for x in ns[i]]
            row.append(str(int(counts[i])))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: BinGrid) -> "BinnedField":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        nd = grid.ndim
        nval = (len(header) - nd - 1) // 2
        data = np.array([[float(x) for x in r] for r in body])
        values = data[:, nd:nd + nval]
        stderr = data[:, nd + nval:nd + 2 * nval]
        counts = data[:, -1].astype(np.int64).reshape(grid.shape)
        if nval == 1 and header[nd] == "value":
            values = values[:, 0].reshape(grid.shape)
            stderr = stderr[:, 0].reshape(grid.shape)
            comps = ()
        else:
            values = values.reshape(grid.shape + (nval,))
            stderr = stderr.reshape(grid.shape + (nval,))
            comps = tuple(h[len("value_"):] for h in header[nd:nd + nval])
        return cls(grid, values, stderr, counts, components=comps)


def _fmt(x) -> str:
    return "nan" if not np.isfinite(x) else repr(float(x))


# ---------------------------------------------------------------------------
# histogramming
# ---------------------------------------------------------------------------

def _bin_counts(values, grid: BinGrid, min_coverage: float = 0.99):
    flat = grid.index(values)
    inside = flat >= 0
    frac_in = float(inside.mean()) if len(flat) else 0.0
    if frac_in < min_coverage:
        raise CoverageError(
            f"only {100 * frac_in:.2f}% of points fall inside the grid "
            f"(need {100 * min_coverage:.0f}%)", escape_fraction=1.0 - frac_in)
    counts = np.bincount(flat[inside], minlength=grid.size).reshape(grid.shape)
    return counts, flat, frac_in


def interior_mask(populated: np.ndarray) -> np.ndarray:
    """Bins with populated bins on both sides along every axis (holes count as interior)."""
    mask = np.ones(populated.shape, bool)
    for ax in range(populated.ndim):
        fwd = np.maximum.accumulate(populated, axis=ax)
        bwd = np.flip(np.maximum.accumulate(np.flip(populated, ax), axis=ax), ax)
        mask &= fwd & bwd
    return mask


def _warn_empty(populated, what):
    n_empty = int(populated.size - populated.sum())
    if n_empty:
        warnings.warn(f"{n_empty} empty bin(s) in {what}", EmptyBinWarning, stacklevel=3)
    return n_empty


def binned_inefficiency(samples: SampleSet, grid: BinGrid, min_count: int = 50) -> float:
    """Statistical inefficiency of per-bin counts from the spread between chains.

    For every well-populated bin the between-chain variance of the count is
    compared with its binomial value; the ratio, averaged over bins, is the
    factor by which correlated sampling inflates per-bin variances. Falls back
    to the coordinate-based ``samples.inefficiency`` with a single chain.
    """
    chains = np.unique(samples.chain_index)
    if len(chains) < 2:
        return float(samples.inefficiency)
    flat = grid.index(samples.relevant())
    ok = flat >= 0
    n_cb = np.stack([np.bincount(flat[ok & (samples.chain_index == c)], minlength=grid.size)
                     for c in chains]).astype(float)
    N_c = n_cb.sum(axis=1)
    p_b = n_cb.sum(axis=0) / N_c.sum()
    good = n_cb.sum(axis=0) >= min_count * len(chains)
    if not np.any(good):
        return float(samples.inefficiency)
    expected = N_c[:, None] * p_b[None, good]
    var = np.mean((n_cb[:, good] - expected) ** 2, axis=0) * len(chains) / (len(chains) - 1)
    ratio = var / np.mean(expected * (1 - p_b[None, good]), axis=0)
    return max(1.0, float(np.mean(ratio)))


def resolve_inefficiency(samples: SampleSet, grid: BinGrid, inefficiency=None) -> float:
    if inefficiency is None:
        return binned_inefficiency(samples, grid)
    return float(inefficiency)


def estimate_hmf(samples: SampleSet, grid: BinGrid, max_empty_interior: float = 0.2,
                 values=None, inefficiency=None) -> BinnedField:
    """Hamiltonian of mean force from the histogram of ``A`` under ``exp(-beta H)``.

    ``H*(alpha) = -(1/beta) ln p(alpha)`` with ``p`` the normalized histogram
    density, shifted so its minimum is zero; the shift is kept in ``offset``.
    Standard errors use binomial counts inflated by the sample set's
    statistical inefficiency of per-bin counts (see :func:`binned_inefficiency`).
    """
    beta = samples.beta
    g_ineff = resolve_inefficiency(samples, grid, inefficiency)
    A = samples.relevant() if values is None else np.asarray(values, float)
    counts, _, _ = _bin_counts(A, grid)
    populated = counts > 0
    interior = interior_mask(populated)
    n_int = int(interior.sum())
    empty_int = int((interior & ~populated).sum())
    if n_int and empty_int / n_int > max_empty_interior:
        raise ResolutionError(
            f"{empty_int}/{n_int} interior bins are empty; coarsen the grid or add samples")
    _warn_empty(populated, "H* histogram")
    N = counts.sum()
    frac = counts / N
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = frac / grid.volume
        raw = np.where(populated, -np.log(dens) / beta, np.nan)
        se = np.where(populated,
                      np.sqrt(g_ineff * (1 - frac) / np.maximum(counts, 1)) / beta,
                      np.nan)
    offset = float(np.nanmin(raw))
    return BinnedField(grid, raw - offset, se, counts, offset,
                       meta={"kind": "hmf", "beta": beta, "n_samples": int(N),
                             "empty_bins": int((~populated).sum()),
                             "empty_interior_bins": empty_int, "inefficiency": g_ineff})


def _axis_diff(values, se, populated, axis, h):
    """Central differences along ``axis``; one-sided where a neighbor is missing."""
    n = values.shape[axis]
    v = np.moveaxis(values, axis, 0)
    s = np.moveaxis(se, axis, 0)
    ok = np.moveaxis(populated, axis, 0)
    grad = np.full(v.shape, np.nan)
    err = np.full(v.shape, np.nan)
    kind = np.zeros(v.shape, np.int8)  # 2 central, 1 one-sided, 0 none
    for i in range(n):
        has_l = ok[i - 1] if i > 0 else np.zeros_like(ok[i])
        has_r = ok[i + 1] if i < n - 1 else np.zeros_like(ok[i])
        me = ok[i]
        vl = v[i - 1] if i > 0 else v[i]
        vr = v[i + 1] if i < n - 1 else v[i]
        sl = s[i - 1] if i > 0 else s[i]
        sr = s[i + 1] if i < n - 1 else s[i]
        c = me & has_l & has_r
        grad[i] = np.where(c, (vr - vl) / (2 * h), grad[i])
        err[i] = np.where(c, np.sqrt(sr ** 2 + sl ** 2) / (2 * h), err[i])
        kind[i][c] = 2
        r = me & ~has_l & has_r
        grad[i] = np.where(r, (vr - v[i]) / h, grad[i])
        err[i] = np.where(r, np.sqrt(sr ** 2 + s[i] ** 2) / h, err[i])
        kind[i][r] = 1
        lft = me & has_l & ~has_r
        grad[i] = np.where(lft, (v[i] - vl) / h, grad[i])
        err[i] = np.where(lft, np.sqrt(sl ** 2 + s[i] ** 2) / h, err[i])
        kind[i][lft] = 1
    return np.moveaxis(grad, 0, axis), np.moveaxis(err, 0, axis), np.moveaxis(kind, 0, axis)


def gradient_field(field: BinnedField) -> BinnedField:
    """Finite-difference gradient of a scalar field with propagated errors.

    Central differences where both neighbors along an axis are populated,
    one-sided at the edge of the populated region; bins without a populated
    neighbor along some axis are excluded with a warning.
    """
    if field.is_vector:
        raise ValueError("gradient_field needs a scalar field")
    g = field.grid
    pop = field.populated
    grads, errs, kinds = [], [], []
    for ax in range(g.ndim):
        d, e, k = _axis_diff(field.values, field.stderr, pop, ax, g.widths[ax])
        grads.append(d)
        errs.append(e)
        kinds.append(k)
    grad = np.stack(grads, axis=-1)
    err = np.stack(errs, axis=-1)
    central = np.all(np.stack(kinds, -1) == 2, axis=-1)
    isolated = pop & np.any(np.stack(kinds, -1) == 0, axis=-1)
    if np.any(isolated):
        warnings.warn(f"{int(isolated.sum())} isolated populated bin(s) excluded from gradient",
                      EmptyBinWarning, stacklevel=2)
        grad[isolated] = np.nan
        err[isolated] = np.nan
    return BinnedField(g, grad, err, field.counts, components=tuple(f"d/d{l}" for l in g.labels),
                       meta={"kind": "gradient", "central": central})


def mean_force(field: BinnedField) -> BinnedField:
    """Gradient ``grad_alpha H*`` of a Hamiltonian-of-mean-force field."""
    out = gradient_field(field)
    return replace(out, meta={**out.meta, "kind": "mean_force"})


def histogram_density(values, grid: BinGrid, inefficiency: float = 1.0):
    """Normalized histogram density (sums to 1 over the grid) with standard errors."""
    counts, flat, frac_in = _bin_counts(values, grid)
    n_in = counts.sum()
    f = counts / n_in
    p = f / grid.volume
    se = np.sqrt(inefficiency * f * (1 - f) / n_in) / grid.volume
    return counts, p, se, flat, frac_in


def estimate_p_alpha_t(initial: SampleSet, system: ClassicalSystem, grid: BinGrid, times,
                       dt: float = 1e-3) -> list[BinnedField]:
    """Macroscopic density ``p(alpha, t)`` of the relevant observables over an evolved ensemble.

    Every point of ``initial`` is propagated with velocity Verlet; ``p`` is the
    histogram of ``A(Gamma(t))`` normalized over the grid. Escaping more than
    1% of the ensemble raises :class:`CoverageError`.
    """
    times = np.asarray(times, dtype=float)
    idx = list(initial.relevant_indices)
    g_ineff = binned_inefficiency(initial, grid)
    order = np.argsort(times)
    results = [None] * len(times)
    for direction in (1, -1):
        sel = [i for i in order if (times[i] >= 0 if direction > 0 else times[i] < 0)]
        if direction < 0:
            sel = sel[::-1]
        state, t_now = initial.points, 0.0
        for i in sel:
            state = propagate(state, system, times[i] - t_now, dt)
            t_now = times[i]
            counts, p, se, _, frac_in = histogram_density(state[:, idx], grid, g_ineff)
            results[i] = BinnedField(
                grid, np.where(counts > 0, p, 0.0), se, counts,
                meta={"kind": "p_alpha_t", "time": float(times[i]),
                      "escape_fraction": 1.0 - frac_in})
    return results


def free_energy(field: BinnedField, beta: float, gauge: str = "stored") -> float:
    """``-(1/beta) ln sum_bins exp(-beta H*) * volume`` over populated bins.

    ``gauge="raw"`` adds back the stored offset first. Empty bins are
    excluded, with an :class:`EmptyBinWarning` naming the excluded volume.
    """
    vals = field.values if gauge == "stored" else field.raw_values()
    pop = field.populated
    if not np.all(pop):
        warnings.warn(f"free energy excludes {int((~pop).sum())} empty bin(s), volume "
                      f"{(~pop).sum() * field.grid.volume:.4g}", EmptyBinWarning, stacklevel=2)
    v = vals[pop]
    v0 = v.min()
    return float(v0 - np.log(np.sum(np.exp(-beta * (v - v0))) * field.grid.volume) / beta)


def fit_quadratic(field: BinnedField, mask=None):
    """Weighted least-squares fit ``H* = c0 + b.alpha + alpha.M.alpha / 2``.

    Returns ``(M, b, c0, cov)`` where ``cov`` is the parameter covariance in
    the order ``[c0, b..., upper-triangular M...]``, scaled by the reduced chi^2.
    """
    g = field.grid
    pop = field.populated if mask is None else (field.populated & mask)
    x = g.centers()[pop]
    y = field.values[pop]
    w = 1.0 / field.stderr[pop] ** 2
    n = g.ndim
    cols = [np.ones(len(x))] + [x[:, i] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    for i, j in pairs:
        cols.append(0.5 * x[:, i] ** 2 if i == j else x[:, i] * x[:, j])
    X = np.stack(cols, axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = (y - X @ coef) * sw
    dof = max(1, len(y) - X.shape[1])
    chi2r = float(resid @ resid / dof)
    cov = np.linalg.inv((X * w[:, None]).T @ X) * max(chi2r, 1.0)
    M = np.zeros((n, n))
    for k, (i, j) in enumerate(pairs):
        M[i, j] = M[j, i] = coef[1 + n + k]
    return M, coef[1:1 + n], float(coef[0]), cov


def quadrature_hmf(system: ClassicalSystem, beta: float, grid: BinGrid, env_half_width: float = 12.0,
                   env_points: tuple = (801, 201), sub: int = 5, bin_average: bool = True) -> np.ndarray:
    """Deterministic ``H*`` on the grid by quadrature over a 2-D environment grid.

    For one system and one environment degree of freedom:
    ``H*(q_S, p_S) = p_S^2 / 2m - (1/beta) ln int dq_E dp_E exp(-beta H) / int exp(-beta H_E)``
    with ``H_E`` the bare environment oscillator. With ``bin_average`` the
    Boltzmann factor is averaged over each bin (``sub`` Gauss-Legendre points
    per axis) so the result is directly comparable to a histogram estimate.
    """
    if system.n_system != 1 or system.n_env != 1 or not system.separable:
        raise ValueError("quadrature oracle supports separable 1+1 degree-of-freedom systems")
    mS, mE = system.masses
    k_bare = system.params.get("k", 1.0)
    qE = np.linspace(-env_half_width, env_half_width, env_points[0])
    pE = np.linspace(-env_half_width, env_half_width, env_points[1])
    kin_E = np.exp(-beta * pE ** 2 / (2 * mE))
    wq = np.full(len(qE), qE[1] - qE[0]); wq[[0, -1]] *= 0.5
    wp = np.full(len(pE), pE[1] - pE[0]); wp[[0, -1]] *= 0.5
    p_int = wp @ kin_E
    z_env = (wq @ np.exp(-beta * 0.5 * k_bare * qE ** 2)) * p_int

    def w_of_q(qs):
        qs = np.asarray(qs, float)
        q = np.stack(np.broadcast_arrays(qs[:, None], qE[None, :]), axis=-1)
        V = system.potential(q)
        vmin = V.min(axis=1, keepdims=True)
        integral = (np.exp(-beta * (V - vmin)) @ wq) * p_int
        return vmin[:, 0] - np.log(integral / z_env) / beta

    if grid.ndim != 2:
        raise ValueError("grid must span (q_S, p_S)")
    if not bin_average:
        c = grid.centers()
        W = w_of_q(grid.axis_centers(0))
        return W[:, None] + c[..., 1] ** 2 / (2 * mS)
    x, wts = np.polynomial.legendre.leggauss(sub)
    wts = wts / 2.0

    def avg_boltz(axis, func):
        e = grid.edges(axis)
        lo, hi = e[:-1], e[1:]
        pts = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
        vals = func(pts.ravel()).reshape(pts.shape)
        ref = vals.min(axis=1, keepdims=True)
        return ref[:, 0] - np.log(np.exp(-beta * (vals - ref)) @ wts) / beta

    Wq = avg_boltz(0, w_of_q)
    Kp = avg_boltz(1, lambda p: p ** 2 / (2 * mS))
    return Wq[:, None] + Kp[None, :]
