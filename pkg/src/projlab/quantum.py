"""
Finite-dimensional operator algebra for composite quantum systems.

Operators are plain complex ``numpy`` arrays. Superoperators act on operators
vectorized by column stacking, ``vec(X) = X.reshape(-1, order="F")``, so that
``vec(A @ X @ B) = kron(B.T, A) @ vec(X)``. The composite Hilbert space is
ordered system-first, ``H = H_S (x) H_E``.

Units: k_B = 1 and hbar = 1 throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-14
HERMITIAN_TOL = 1e-12
DEGENERACY_RTOL = 1e-9


class EigenvalueFloorWarning(RuntimeWarning):
    """Eigenvalues of a positive operator were raised to the floor before log/power."""


class ConditioningError(ArithmeticError):
    """A numerically ill-conditioned operation was requested."""


@dataclass(frozen=True)
class HilbertLayout:
    """Bipartite split of the composite space, system first."""

    dim_system: int
    dim_env: int

    def __post_init__(self):
        if int(self.dim_system) < 2:
            raise ValueError(f"dim_system must be >= 2, got {self.dim_system}")
        if int(self.dim_env) < 1:
            raise ValueError(f"dim_env must be >= 1, got {self.dim_env}")

    @property
    def dim(self) -> int:
        return self.dim_system * self.dim_env

    def check(self, X: np.ndarray) -> None:
        if X.shape != (self.dim, self.dim):
            raise ValueError(f"operator shape {X.shape} does not match layout dimension {self.dim}")


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def hermitian(X, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``X`` as a Hermitian complex array, symmetrizing away rounding noise."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
    if np.max(np.abs(X - X.conj().T), initial=0.0) > tol * scale:
        raise ValueError("operator is not Hermitian")
    return 0.5 * (X + X.conj().T)


def density_matrix(rho, tol: float = 1e-12) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, eigenvalues >= -tol."""
    rho = hermitian(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace {tr} != 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def is_density_matrix(rho, tol: float = 1e-12) -> bool:
    try:
        density_matrix(rho, tol)
    except ValueError:
        return False
    return True


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (A + A.conj().T)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# matrix functions
# ---------------------------------------------------------------------------

def floor_eigenvalues(w: np.ndarray, floor: float = EIG_FLOOR, what: str = "operator") -> np.ndarray:
    """Clip eigenvalues at ``floor``, emitting an :class:`EigenvalueFloorWarning` if any moved."""
    low = w < floor
    if np.any(low):
        warnings.warn(
            f"{int(low.sum())} eigenvalue(s) of {what} below {floor:g} floored",
            EigenvalueFloorWarning,
            stacklevel=3,
        )
        w = np.where(low, floor, w)
    return w


def hermitian_function(X: np.ndarray, func) -> np.ndarray:
    """Apply ``func`` to the eigenvalues of Hermitian ``X``."""
    w, V = np.linalg.eigh(X)
    return (V * func(w)) @ V.conj().T


def expm_hermitian(X: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * X)`` for Hermitian ``X``."""
    w, V = np.linalg.eigh(X)
    return (V * np.exp(scale * w)) @ V.conj().T


def logm_positive(rho: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    w, V = np.linalg.eigh(rho)
    w = floor_eigenvalues(w, floor, "positive operator (log)")
    return (V * np.log(w)) @ V.conj().T


def powm_positive(rho: np.ndarray, alpha: float, floor: float = EIG_FLOOR) -> np.ndarray:
    w, V = np.linalg.eigh(rho)
    if alpha < 0 or alpha != int(alpha):
        w = floor_eigenvalues(w, floor, "positive operator (power)")
    else:
        w = np.clip(w, 0.0, None)
    return (V * w ** alpha) @ V.conj().T


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def gibbs_state(H, beta: float) -> np.ndarray:
    """Canonical state ``exp(-beta H) / Tr exp(-beta H)``.

    The spectrum is shifted by its minimum before exponentiating so large
    ``beta * H`` cannot overflow.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    H = hermitian(H)
    if not np.all(np.isfinite(H)):
        raise ValueError("Hamiltonian has non-finite entries")
    w, V = np.linalg.eigh(H)
    weights = np.exp(-beta * (w - w.min()))
    Z = weights.sum()
    if not np.isfinite(Z) or Z <= 0:
        raise ArithmeticError("partition function is not finite")
    rho = (V * (weights / Z)) @ V.conj().T
    return 0.5 * (rho + rho.conj().T)


def partial_trace_env(X, layout: HilbertLayout) -> np.ndarray:
    """``(Tr_E X)_{ij} = sum_k X_{(i,k),(j,k)}``."""
    X = np.asarray(X)
    layout.check(X)
    dS, dE = layout.dim_system, layout.dim_env
    return np.einsum("ikjk->ij", X.reshape(dS, dE, dS, dE))


def partial_trace_system(X, layout: HilbertLayout) -> np.ndarray:
    X = np.asarray(X)
    layout.check(X)
    dS, dE = layout.dim_system, layout.dim_env
    return np.einsum("kikj->ij", X.reshape(dS, dE, dS, dE))


def embed_system(X_S, layout: HilbertLayout) -> np.ndarray:
    """``X_S (x) I_E``."""
    return np.kron(X_S, np.eye(layout.dim_env))


def embed_env(X_E, layout: HilbertLayout) -> np.ndarray:
    """``I_S (x) X_E``."""
    return np.kron(np.eye(layout.dim_system), X_E)


# ---------------------------------------------------------------------------
# mean force
# ---------------------------------------------------------------------------

def hamiltonian_of_mean_force(H, beta: float, layout: HilbertLayout, h_env=None,
                              full_output: bool = False):
    """Quantum Hamiltonian of mean force on the system factor.

    ``H* = -(1/beta) ln[ Tr_E exp(-beta H) / Tr_E exp(-beta H_E) ]`` with the
    gauge ``Z* = Z / Z_E``. ``h_env`` is the bare environment Hamiltonian on
    the environment factor (defaults to zero, i.e. ``Z_E = d_E``).

    With ``full_output`` a dict is returned alongside, holding the raw
    ``-(1/beta) ln rho_S`` (normalized gauge), ``Z_star``, and the identity
    component ``Tr(H*)/d_S``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    H = hermitian(H)
    layout.check(H)
    dS, dE = layout.dim_system, layout.dim_env
    h_env = np.zeros((dE, dE)) if h_env is None else hermitian(h_env)
    if h_env.shape != (dE, dE):
        raise ValueError("h_env must act on the environment factor")

    w, V = np.linalg.eigh(H)
    e0 = w.min()
    boltz = (V * np.exp(-beta * (w - e0))) @ V.conj().T
    reduced = partial_trace_env(boltz, layout)
    reduced = 0.5 * (reduced + reduced.conj().T)
    lam = np.linalg.eigvalsh(reduced)
    if lam.min() <= 0 or not np.all(np.isfinite(lam)):
        raise ConditioningError(
            "Tr_E exp(-beta H) is not positive definite "
            f"(smallest eigenvalue {lam.min():.3e} relative to {lam.max():.3e})"
        )
    tr = np.trace(reduced).real
    rho_S = reduced / tr
    raw = -logm_positive(rho_S) / beta

    wE = np.linalg.eigvalsh(h_env)
    eE = wE.min()
    ln_ZE = np.log(np.exp(-beta * (wE - eE)).sum()) - beta * eE
    ln_Z = np.log(tr) - beta * e0
    ln_Zstar = ln_Z - ln_ZE
    hmf = raw - (ln_Zstar / beta) * np.eye(dS)
    hmf = 0.5 * (hmf + hmf.conj().T)
    if not full_output:
        return hmf
    info = {
        "raw": raw,
        "Z_star": float(np.exp(ln_Zstar)),
        "ln_Z_star": float(ln_Zstar),
        "identity_component": float(np.trace(hmf).real / dS),
        "reduced_state": rho_S,
    }
    return hmf, info


def free_energy(hmf, beta: float) -> float:
    """``F = -(1/beta) ln Tr exp(-beta H*)`` for a Hamiltonian-of-mean-force matrix.

    For a binned classical field use :func:`projlab.meanforce.free_energy`.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if hasattr(hmf, "grid"):
        from .meanforce import free_energy as classical_free_energy
        return classical_free_energy(hmf, beta)
    w = np.linalg.eigvalsh(hermitian(hmf))
    e0 = w.min()
    return float(e0 - np.log(np.exp(-beta * (w - e0)).sum()) / beta)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def vec(X) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def left_superop(A) -> np.ndarray:
    """Matrix of ``X -> A X``."""
    A = np.asarray(A)
    return np.kron(np.eye(A.shape[0]), A)


def right_superop(B) -> np.ndarray:
    """Matrix of ``X -> X B``."""
    B = np.asarray(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def commutator_superop(A) -> np.ndarray:
    """Matrix of ``X -> [A, X]``."""
    return left_superop(A) - right_superop(A)


def liouvillian_superop(H) -> np.ndarray:
    """Generator of the Schroedinger-picture flow, the matrix of ``rho -> -i[H, rho]``.

    ``expm(t * liouvillian_superop(H)) @ vec(rho0) == vec(evolve_state(rho0, H, t))``.
    """
    return -1j * commutator_superop(hermitian(H))


def heisenberg_superop(H) -> np.ndarray:
    """Generator of observables, the matrix of ``X -> i[H, X]``."""
    return 1j * commutator_superop(hermitian(H))


def evolve_state(rho0, H, t: float) -> np.ndarray:
    """``exp(-iHt) rho0 exp(iHt)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    H = hermitian(H)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != H.shape:
        raise ValueError("state and Hamiltonian dimensions differ")
    U = expm_hermitian(H, -1j * t)
    return U @ rho0 @ U.conj().T


def spectral_decomposition(A, rtol: float = DEGENERACY_RTOL):
    """Eigenvalues and orthogonal spectral projectors of a Hermitian operator.

    Eigenvalues closer than ``rtol * max(1, ||A||)`` are grouped into one
    projector. Returns ``(values, projectors)`` with ``projectors`` of shape
    ``(n_distinct, d, d)``.
    """
    A = hermitian(A)
    w, V = np.linalg.eigh(A)
    tol = rtol * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    groups = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[groups[-1][0]] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    values = np.array([w[g].mean() for g in groups])
    projectors = np.array([V[:, g] @ V[:, g].conj().T for g in groups])
    return values, projectors
