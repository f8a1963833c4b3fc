"""
Time-convolutionless (TCL) analysis of a system coupled to a finite environment.

Pipeline: exact composite evolution gives the reduced map ``V(t)``; the
time-local generator is ``K(t) = dV/dt V(t)^-1``; each ``K(t)`` is split into
a commutator with an effective Hamiltonian plus the dissipator of minimal
norm under a chosen operator inner product.

Superoperators act on column-stacked system operators (see
:mod:`projlab.quantum`). Observables evolve with ``i[H, .]`` and states with
``-i[H, .]``.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad_vec
from scipy.linalg import expm

from .inner import InnerProductSpec, _gram_root, decode_array, encode_array, superop_inner
from .quantum import (ConditioningError, HilbertLayout, density_matrix, hermitian,
                      partial_trace_env, random_hermitian, unvec, vec)

MAX_DIM = 64
SINGULAR_THRESHOLD = 1e-8
GRAM_COND_MAX = 1e12
DEFAULT_DELTA = 1e-3


class GeneratorGapWarning(RuntimeWarning):
    """The reduced map is singular at a time; the TCL generator is undefined there."""


class DegenerateSplittingError(ConditioningError):
    """The commutator directions are ill-conditioned under the chosen inner product."""


class QuadratureError(ConditioningError):
    """Adaptive quadrature did not reach the requested tolerance."""


def commutator_matrix(H) -> np.ndarray:
    """Matrix of ``X -> -i[H, X]``."""
    H = np.asarray(H, complex)
    d = H.shape[0]
    eye = np.eye(d)
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye))


def traceless_hermitian_basis(d: int) -> np.ndarray:
    """Generalized Gell-Mann matrices, orthonormal under ``Tr(X^dagger Y)``; shape ``(d^2 - 1, d, d)``."""
    out = []
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            A = np.zeros((d, d), complex)
            A[j, k], A[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out += [S, A]
    for l in range(1, d):
        D = np.zeros((d, d), complex)
        D[np.arange(l), np.arange(l)] = 1.0
        D[l, l] = -l
        out.append(D / np.sqrt(l * (l + 1)))
    return np.array(out)


def traceless(X) -> np.ndarray:
    X = np.asarray(X, complex)
    return X - np.trace(X) / X.shape[0] * np.eye(X.shape[0])


# ---------------------------------------------------------------------------
# reduced maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedDynamics:
    """Composite Hamiltonian with a fixed environment state; product initial conditions."""

    H: np.ndarray
    env_state: np.ndarray
    layout: HilbertLayout

    def __post_init__(self):
        if self.layout.dim > MAX_DIM:
            raise ValueError(f"composite dimension {self.layout.dim} exceeds the budget of {MAX_DIM}")
        H = hermitian(self.H)
        self.layout.check(H)
        env = density_matrix(self.env_state)
        if env.shape != (self.layout.dim_env,) * 2:
            raise ValueError("environment state does not match the layout")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "env_state", env)
        w, U = np.linalg.eigh(H)
        object.__setattr__(self, "_eig", (w, U))

    def _propagator(self, t: float) -> np.ndarray:
        w, U = self._eig
        return (U * np.exp(-1j * w * t)) @ U.conj().T

    def _sandwich(self, A, B) -> np.ndarray:
        """Matrix of ``X -> Tr_E(A (X (x) env) B^dagger)`` on system operators."""
        dS, dE = self.layout.dim_system, self.layout.dim_env
        A4 = A.reshape(dS, dE, dS, dE)
        B4 = B.reshape(dS, dE, dS, dE)
        T = np.einsum("ikac,cd,jkbd->ijab", A4, self.env_state, B4.conj(), optimize=True)
        return T.reshape(dS * dS, dS * dS, order="F")

    def map(self, t: float) -> np.ndarray:
        """``V(t)``: ``X -> Tr_E(e^{-iHt} (X (x) env) e^{iHt})``; defined for any real ``t``."""
        U = self._propagator(t)
        return self._sandwich(U, U)

    def derivative(self, t: float) -> np.ndarray:
        """Exact ``dV/dt = Tr_E(-i[H, U (X (x) env) U^dagger])``."""
        U = self._propagator(t)
        HU = self.H @ U
        return -1j * (self._sandwich(HU, U) - self._sandwich(U, HU))

    def series(self, times) -> "DynamicalMapSeries":
        times = np.asarray(times, float)
        return DynamicalMapSeries(times, np.array([self.map(t) for t in times]),
                                  self.layout.dim_system, self)

    def reduced_states(self, rho_S0, times) -> np.ndarray:
        rho_S0 = density_matrix(rho_S0)
        d = self.layout.dim_system
        return np.array([unvec(self.map(t) @ vec(rho_S0), d) for t in np.asarray(times, float)])

    def exact_reduced_state(self, rho_S0, t: float) -> np.ndarray:
        U = self._propagator(t)
        full = U @ np.kron(density_matrix(rho_S0), self.env_state) @ U.conj().T
        return partial_trace_env(full, self.layout)


def reduced_map(H, env_state, layout: HilbertLayout, times) -> "DynamicalMapSeries":
    return ReducedDynamics(H, env_state, layout).series(times)


def choi_matrix(V: np.ndarray, d: int) -> np.ndarray:
    """``sum_ab E_ab (x) V(E_ab)``."""
    C = np.zeros((d * d, d * d), complex)
    for a in range(d):
        for b in range(d):
            E = np.zeros((d, d), complex)
            E[a, b] = 1.0
            C += np.kron(E, unvec(V @ vec(E), d))
    return C


@dataclass
class DynamicalMapSeries:
    """``V(t_k)`` on a time grid, with the generating dynamics when known."""

    times: np.ndarray
    maps: np.ndarray
    dim: int
    dynamics: ReducedDynamics | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.maps = np.asarray(self.maps, complex)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("times must be a non-empty 1-d array")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.maps.shape != (len(self.times), self.dim ** 2, self.dim ** 2):
            raise ValueError("maps do not match the time grid and dimension")

    def __len__(self) -> int:
        return len(self.times)

    def singular_values_min(self) -> np.ndarray:
        return np.array([np.linalg.svd(V, compute_uv=False)[-1] for V in self.maps])

    def trace_preservation_error(self) -> np.ndarray:
        tr = vec(np.eye(self.dim))
        return np.array([np.abs(tr @ V - tr).max() for V in self.maps])

    def hermiticity_error(self) -> np.ndarray:
        d = self.dim
        out = []
        for V in self.maps:
            err = 0.0
            for n in range(d * d):
                E = unvec(np.eye(d * d)[n], d)
                err = max(err, np.abs(unvec(V @ vec(E.conj().T), d)
                                      - unvec(V @ vec(E), d).conj().T).max())
            out.append(err)
        return np.array(out)

    def choi_min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(hermitian(choi_matrix(V, self.dim))).min()
                         for V in self.maps])

    def apply(self, rho_S0) -> np.ndarray:
        r = vec(np.asarray(rho_S0, complex))
        return np.array([unvec(V @ r, self.dim) for V in self.maps])

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "dim": self.dim, "maps": encode_array(self.maps)}

    @classmethod
    def from_dict(cls, obj: dict) -> "DynamicalMapSeries":
        return cls(np.asarray(obj["times"], float), decode_array(obj["maps"]), int(obj["dim"]))


# ---------------------------------------------------------------------------
# TCL generator
# ---------------------------------------------------------------------------

@dataclass
class GeneratorSeries:
    """``K(t_k)``; entries at singular times are ``NaN`` and flagged in ``gaps``."""

    times: np.ndarray
    generators: np.ndarray
    dim: int
    gaps: np.ndarray
    sigma_min: np.ndarray
    hermiticity_error: np.ndarray
    trace_error: np.ndarray

    @property
    def n_gaps(self) -> int:
        return int(self.gaps.sum())

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "dim": self.dim, "gaps": self.gaps.tolist(),
                "sigma_min": self.sigma_min.tolist(),
                "generators": encode_array(np.nan_to_num(self.generators))}


def _central(fn, t: float, h: float) -> np.ndarray:
    return (fn(t + h) - fn(t - h)) / (2 * h)


def map_derivative(series: DynamicalMapSeries, k: int, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """``dV/dt`` at ``t_k`` by central differences with one Richardson step.

    Uses the generating dynamics to evaluate ``V`` at ``t_k +- delta`` and
    ``t_k +- delta/2``, giving fourth-order accuracy. Without dynamics the
    stored grid is differentiated (second order, one-sided at the ends).
    """
    if series.dynamics is not None:
        f = series.dynamics.map
        t = series.times[k]
        return (4 * _central(f, t, delta / 2) - _central(f, t, delta)) / 3
    if len(series) < 3:
        raise ValueError("at least three grid points are needed without the generating dynamics")
    return np.gradient(series.maps, series.times, axis=0, edge_order=2)[k]


def derivative_convergence(series: DynamicalMapSeries, k: int, delta: float = 1e-2) -> float:
    """Ratio of successive changes of the plain central difference under step halving (about 4)."""
    f = series.dynamics.map
    t = series.times[k]
    d1, d2, d3 = (_central(f, t, delta / s) for s in (1, 2, 4))
    return float(np.linalg.norm(d1 - d2) / np.linalg.norm(d2 - d3))


def _hp_error(K: np.ndarray, d: int) -> float:
    err = 0.0
    for n in range(d * d):
        E = unvec(np.eye(d * d)[n], d)
        err = max(err, np.abs(unvec(K @ vec(E.conj().T), d) - unvec(K @ vec(E), d).conj().T).max())
    return float(err)


def tcl_generator(series: DynamicalMapSeries, delta: float = DEFAULT_DELTA,
                  threshold: float = SINGULAR_THRESHOLD) -> GeneratorSeries:
    """``K(t_k) = dV/dt V^-1``; times where ``V`` is singular become gaps with a warning."""
    d = series.dim
    n = len(series)
    if series.dynamics is None:
        grad = np.gradient(series.maps, series.times, axis=0, edge_order=2)
    Ks = np.full((n, d * d, d * d), np.nan, complex)
    gaps = np.zeros(n, bool)
    smin = np.empty(n)
    herm = np.full(n, np.nan)
    trace = np.full(n, np.nan)
    tr = vec(np.eye(d))
    for k in range(n):
        V = series.maps[k]
        smin[k] = np.linalg.svd(V, compute_uv=False)[-1]
        if smin[k] < threshold:
            gaps[k] = True
            warnings.warn(f"reduced map singular at t = {series.times[k]:.6g} "
                          f"(smallest singular value {smin[k]:.3e}); generator undefined",
                          GeneratorGapWarning, stacklevel=2)
            continue
        Vdot = map_derivative(series, k, delta) if series.dynamics is not None else grad[k]
        K = np.linalg.solve(V.T, Vdot.T).T
        Ks[k] = K
        herm[k] = _hp_error(K, d)
        trace[k] = float(np.abs(tr @ K).max())
    return GeneratorSeries(series.times.copy(), Ks, d, gaps, smin, herm, trace)


# ---------------------------------------------------------------------------
# minimal-dissipation splitting
# ---------------------------------------------------------------------------

def _spec_for(spec: InnerProductSpec | None) -> InnerProductSpec:
    return InnerProductSpec("hilbert_schmidt") if spec is None else spec


@dataclass
class GeneratorSplit:
    """``K = -i[H_eff, .] + D`` with ``D`` orthogonal to every commutator direction."""

    H_eff: np.ndarray
    D: np.ndarray
    dissipator_norm: float
    spec: dict
    gram_condition: float
    orthogonality: float

    def conservative(self) -> np.ndarray:
        return commutator_matrix(self.H_eff)

    def to_dict(self) -> dict:
        return {"H_eff": encode_array(self.H_eff), "D": encode_array(self.D),
                "dissipator_norm": self.dissipator_norm, "spec": self.spec,
                "gram_condition": self.gram_condition, "orthogonality": self.orthogonality}


class CommutatorProjection:
    """Least-squares projection of superoperators onto ``{-i[H, .] : H traceless Hermitian}``.

    The target norm is the superoperator Hilbert-Schmidt norm induced by the
    operator inner product in ``spec``. Parameters are real coefficients in a
    traceless Hermitian basis, so the fitted ``H_eff`` is Hermitian and traceless.
    """

    def __init__(self, d: int, spec: InnerProductSpec | None = None,
                 cond_max: float = GRAM_COND_MAX):
        self.d = d
        self.spec = _spec_for(spec)
        if self.spec.dim not in (None, d):
            raise ValueError(f"inner product weight has dimension {self.spec.dim}, expected {d}")
        self.W, self.Wi, self.operator_gram_condition = _gram_root(self.spec.gram(d))
        self.basis = traceless_hermitian_basis(d)
        cols = [(self.W @ commutator_matrix(G) @ self.Wi).reshape(-1) for G in self.basis]
        A = np.stack(cols, axis=1)
        self._A = np.vstack([A.real, A.imag])
        normal = self._A.T @ self._A
        self.gram_condition = float(np.linalg.cond(normal))
        if not np.isfinite(self.gram_condition) or self.gram_condition > cond_max:
            raise DegenerateSplittingError(
                f"commutator Gram matrix is ill-conditioned (condition number {self.gram_condition:.3e})")

    def norm(self, S) -> float:
        return float(np.linalg.norm(self.W @ S @ self.Wi))

    def split(self, K) -> GeneratorSplit:
        K = np.asarray(K, complex)
        b = (self.W @ K @ self.Wi).reshape(-1)
        h = np.linalg.lstsq(self._A, np.concatenate([b.real, b.imag]), rcond=None)[0]
        H = np.einsum("k,kij->ij", h, self.basis)
        H = 0.5 * (H + H.conj().T)
        D = K - commutator_matrix(H)
        ortho = max(abs(superop_inner(commutator_matrix(G), D, self.spec, self.d).real)
                    for G in self.basis)
        return GeneratorSplit(H, D, self.norm(D), self.spec.describe(), self.gram_condition,
                              float(ortho))

    def minimality_check(self, K, split: GeneratorSplit, rng: np.random.Generator,
                         n: int = 20, scale: float = 1e-3) -> np.ndarray:
        """``||D'|| - ||D||`` for ``n`` random traceless Hermitian perturbations of ``H_eff``.

        Every entry must be non-negative (up to rounding) if the split is minimal.
        """
        K = np.asarray(K, complex)
        out = np.empty(n)
        for i in range(n):
            dH = traceless(random_hermitian(self.d, rng, scale))
            out[i] = self.norm(K - commutator_matrix(split.H_eff + dH)) - split.dissipator_norm
        return out


def split_minimal_dissipation(K, spec: InnerProductSpec | None = None,
                              d: int | None = None) -> GeneratorSplit:
    K = np.asarray(K, complex)
    d = d or int(round(np.sqrt(K.shape[0])))
    return CommutatorProjection(d, spec).split(K)


@dataclass
class SplitSeries:
    """Minimal-dissipation splits along a generator series; gaps carry ``NaN``."""

    times: np.ndarray
    H_eff: np.ndarray
    dissipator_norm: np.ndarray
    gaps: np.ndarray
    label: str = "hilbert_schmidt"
    splits: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"label": self.label, "times": self.times.tolist(), "gaps": self.gaps.tolist(),
                "H_eff": encode_array(self.H_eff),
                "dissipator_norm": [None if np.isnan(x) else float(x) for x in self.dissipator_norm]}

    @classmethod
    def from_dict(cls, obj: dict) -> "SplitSeries":
        dn = np.array([np.nan if x is None else x for x in obj["dissipator_norm"]], float)
        return cls(np.asarray(obj["times"], float), decode_array(obj["H_eff"]), dn,
                   np.asarray(obj["gaps"], bool), obj["label"])


def split_series(generators: GeneratorSeries, spec=None, label: str | None = None) -> SplitSeries:
    """Split every ``K(t_k)``; ``spec`` is an :class:`InnerProductSpec` or ``k -> spec``."""
    d = generators.dim
    n = len(generators.times)
    H = np.full((n, d, d), np.nan, complex)
    dn = np.full(n, np.nan)
    splits = [None] * n
    fixed = None if callable(spec) else CommutatorProjection(d, spec)
    for k in range(n):
        if generators.gaps[k]:
            continue
        proj = fixed if fixed is not None else CommutatorProjection(d, spec(k))
        s = proj.split(generators.generators[k])
        H[k], dn[k], splits[k] = s.H_eff, s.dissipator_norm, s
    if label is None:
        label = (fixed.spec.kind if fixed is not None else "time_dependent")
    return SplitSeries(generators.times.copy(), H, dn, generators.gaps.copy(), label, splits)


# ---------------------------------------------------------------------------
# thermodynamic diagnostics
# ---------------------------------------------------------------------------

def work_flux(splits: SplitSeries, states) -> tuple[np.ndarray, np.ndarray]:
    """``(flux, work)`` with ``flux_k = Tr(dH_eff/dt rho_S(t_k))`` and trapezoidal work.

    ``dH_eff/dt`` uses central differences on the uniform grid (second-order
    one-sided at the ends); a gap contaminates the flux at its neighbours and
    the accumulated work from there on.
    """
    t = splits.times
    if len(t) < 3:
        raise ValueError("work flux needs at least three times")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("work flux needs a uniform time grid")
    states = np.asarray(states, complex)
    Hdot = np.gradient(splits.H_eff, t, axis=0, edge_order=2)
    flux = np.einsum("kij,kji->k", Hdot, states).real
    work = np.concatenate([[0.0], cumulative_trapezoid(flux, t)])
    return flux, work


def compare_heff_hmf(splits: SplitSeries, hmf_S, states=None, equilibrium_state=None,
                     tol: float = 1e-2) -> dict:
    """Distance ``||H_eff(t) - H*_S||_F`` in the traceless gauge.

    When ``states`` and ``equilibrium_state`` are given, equilibration is
    judged by the mean trace distance over the last quarter of the run; a
    non-equilibrating run still gets a report, with a caveat.
    """
    hmf_S = hermitian(hmf_S)
    target = traceless(hmf_S)
    dist = np.array([np.nan if splits.gaps[k] else
                     float(np.linalg.norm(traceless(splits.H_eff[k]) - target))
                     for k in range(len(splits.times))])
    report = {"label": splits.label, "times": splits.times.tolist(),
              "distance": [None if np.isnan(x) else x for x in dist],
              "hmf_identity_component": float(np.trace(hmf_S).real / hmf_S.shape[0]),
              "equilibrated": None, "caveat": None}
    if states is not None and equilibrium_state is not None:
        states = np.asarray(states, complex)
        tail = states[-max(1, len(states) // 4):]
        gap = float(np.mean([0.5 * np.abs(np.linalg.eigvalsh(hermitian(s - equilibrium_state))).sum()
                             for s in tail]))
        report["equilibration_distance"] = gap
        report["equilibrated"] = bool(gap < tol)
        if gap >= tol:
            report["caveat"] = (f"reduced state stays {gap:.3g} (trace distance) from the reduced "
                                f"equilibrium state; distances describe a transient")
    return report


def propagate_tcl(generators: GeneratorSeries, rho_S0) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``d rho/dt = K(t) rho`` with classical RK4 on step pairs of the grid.

    Midpoint generators are taken from the odd grid points, so the grid must be
    uniform. Returns ``(times, states)`` at the even grid points up to the first gap.
    """
    t = generators.times
    d = generators.dim
    stop = int(np.argmax(generators.gaps)) if generators.gaps.any() else len(t)
    r = vec(density_matrix(rho_S0))
    out_t, out = [t[0]], [unvec(r, d)]
    K = generators.generators
    for k in range(0, stop - 2, 2):
        h = t[k + 2] - t[k]
        k1 = K[k] @ r
        k2 = K[k + 1] @ (r + 0.5 * h * k1)
        k3 = K[k + 1] @ (r + 0.5 * h * k2)
        k4 = K[k + 2] @ (r + h * k3)
        r = r + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out_t.append(t[k + 2])
        out.append(unvec(r, d))
    return np.array(out_t), np.array(out)


def series_csv(splits: SplitSeries, flux=None, work=None, distance=None) -> str:
    """CSV with columns ``time, flux, work, dissipator_norm, distance_to_hmf``."""
    n = len(splits.times)
    cols = [flux, work, splits.dissipator_norm, distance]
    cols = [np.full(n, np.nan) if c is None else
            np.array([np.nan if x is None else x for x in c], float) for c in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "flux", "work", "dissipator_norm", "distance_to_hmf"])
    for k in range(n):
        w.writerow([repr(float(splits.times[k]))] +
                   ["nan" if np.isnan(c[k]) else repr(float(c[k])) for c in cols])
    return buf.getvalue()


def read_series_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}


def dumps(obj) -> str:
    return json.dumps(obj.to_dict() if hasattr(obj, "to_dict") else obj, sort_keys=True)


# ---------------------------------------------------------------------------
# propagator decomposition identity
# ---------------------------------------------------------------------------

@dataclass
class DecompositionResult:
    times: list
    heisenberg_residual: list
    schroedinger_residual: list
    idempotence_error: float

    @property
    def max_residual(self) -> float:
        return float(max(self.heisenberg_residual + self.schroedinger_residual))

    def to_dict(self) -> dict:
        return {"times": self.times, "heisenberg_residual": self.heisenberg_residual,
                "schroedinger_residual": self.schroedinger_residual,
                "idempotence_error": self.idempotence_error, "max_residual": self.max_residual}


def verify_propagator_decomposition(L, P, t: float, n_checkpoints: int = 1,
                                    epsabs: float = 1e-13, epsrel: float = 1e-12,
                                    idempotence_tol: float = 1e-10) -> DecompositionResult:
    """Check ``e^{Lt} = e^{Lt}P + int_0^t e^{Ls} P L Q e^{LQ(t-s)} ds + Q e^{LQt}``.

    ``L`` is the observable generator (e.g. :func:`projlab.quantum.heisenberg_superop`)
    and ``Q = 1 - P``. The state-side form with ``L^dagger`` and ``P^dagger``,
    ``e^{L't} = P'e^{L't} + int_0^t e^{Q'L'(t-s)} Q'L'P' e^{L's} ds + e^{Q'L't}Q'``,
    is evaluated independently. Residuals are Frobenius norms at
    ``n_checkpoints`` equally spaced times ending at ``t``.
    """
    L = np.asarray(L, complex)
    P = np.asarray(P, complex)
    idem = float(np.linalg.norm(P @ P - P))
    if idem > idempotence_tol:
        raise ValueError(f"P is not idempotent (||P^2 - P|| = {idem:.3e})")
    n = L.shape[0]
    Q = np.eye(n) - P
    LQ = L @ Q
    PLQ = P @ L @ Q
    La, Pa, Qa = L.conj().T, P.conj().T, Q.conj().T
    QLa = Qa @ La
    QLPa = Qa @ La @ Pa

    def integrate(fn, tt):
        if tt == 0:
            return 0.0
        val, err, info = quad_vec(fn, 0.0, tt, epsabs=epsabs, epsrel=epsrel, full_output=True)
        if not info.success:
            raise QuadratureError(f"quadrature did not converge at t = {tt:g} (error estimate {err:.3e})")
        return val

    times = [float(t) * (j + 1) / n_checkpoints for j in range(n_checkpoints)] if t > 0 else [0.0]
    res_h, res_s = [], []
    for tt in times:
        lhs = expm(L * tt)
        rhs_fn = (lambda s: expm(L * s) @ PLQ @ expm(LQ * (tt - s)))
        I = integrate(rhs_fn, tt)
        res_h.append(float(np.linalg.norm(lhs - (lhs @ P + I + Q @ expm(LQ * tt)))))
        lhs_a = expm(La * tt)
        fn_a = (lambda s: expm(QLa * (tt - s)) @ QLPa @ expm(La * s))
        Ia = integrate(fn_a, tt)
        res_s.append(float(np.linalg.norm(lhs_a - (Pa @ lhs_a + Ia + expm(QLa * tt) @ Qa))))
    return DecompositionResult(times, res_h, res_s, idem)
