"""
Weighted operator inner products, the Kubo (Sigma) similarity transformation,
the Grabert projector and a probe for classical-classical bipartite states.

Notation: ``rho`` is a strictly positive weight (usually a Gibbs state). The
Kubo transformation is ``Sigma X = int_0^1 rho^a X rho^(1-a) da``; in the
eigenbasis of ``rho`` it multiplies matrix elements by the logarithmic mean
of the corresponding eigenvalue pair.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .quantum import (EIG_FLOOR, ConditioningError, EigenvalueFloorWarning, HilbertLayout,
                      floor_eigenvalues, gibbs_state, hamiltonian_of_mean_force, hermitian,
                      logm_positive, partial_trace_env, powm_positive, spectral_decomposition,
                      unvec, vec)

KINDS = ("hilbert_schmidt", "deformed", "kubo_averaged", "classical_weighted")
SIGMA_S_COND_MAX = 1e10
QUADRATURE_POINTS = 64


def _carray(X) -> np.ndarray:
    return np.asarray(X, dtype=complex)


def _fro(X) -> float:
    return float(np.linalg.norm(X))


def encode_array(X) -> dict | list:
    """JSON-friendly nested lists; complex arrays become ``{"re": ..., "im": ...}``."""
    X = np.asarray(X)
    if np.iscomplexobj(X):
        return {"re": X.real.tolist(), "im": X.imag.tolist()}
    return X.tolist()


def decode_array(obj) -> np.ndarray:
    if isinstance(obj, dict):
        return np.asarray(obj["re"], float) + 1j * np.asarray(obj["im"], float)
    return np.asarray(obj, float)


# ---------------------------------------------------------------------------
# logarithmic mean and the Sigma transformation
# ---------------------------------------------------------------------------

def log_mean(a, b):
    """``L(a, b) = (a - b) / (ln a - ln b)`` with ``L(a, a) = a``; elementwise, a, b > 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("logarithmic mean needs non-negative arguments")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(a) - np.log(b)
        ratio = np.where(x == 0, 1.0, np.expm1(x) / np.where(x == 0, 1.0, x))
        out = b * ratio
    # a or b zero: the limit is 0
    return np.where((a == 0) | (b == 0), 0.0, out)


def log_mean_from_logs(la, lb):
    """``L(e^la, e^lb)`` evaluated without forming the exponentials' difference."""
    la = np.asarray(la, dtype=float)
    lb = np.asarray(lb, dtype=float)
    hi = np.maximum(la, lb)
    x = np.abs(la - lb)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x == 0, 1.0, -np.expm1(-x) / np.where(x == 0, 1.0, x))
    return np.exp(hi) * ratio


def gibbs_log_spectrum(H, beta: float):
    """Exact ``ln`` eigenvalues of ``exp(-beta H)/Z`` and the eigenvectors, with no underflow."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    E, V = np.linalg.eigh(hermitian(H))
    a = -beta * (E - E.min())
    return a - np.log(np.exp(a).sum()), V


def gibbs_kubo_factors(H, beta: float):
    """Kubo factors for the Gibbs weight of ``H``; exact even where ``rho_beta`` underflows."""
    lw, V = gibbs_log_spectrum(H, beta)
    return log_mean_from_logs(lw[:, None], lw[None, :]), V


def _weight_eig(rho, floor: float = EIG_FLOOR):
    rho = hermitian(rho)
    w, V = np.linalg.eigh(rho)
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ValueError(f"weight is not positive semidefinite (eigenvalue {w.min():.3e})")
    return floor_eigenvalues(w, floor, "weight"), V, w


def kubo_factors(rho, floor: float = EIG_FLOOR):
    """``(L(lambda_m, lambda_n), V)`` for the eigendecomposition ``rho = V diag(lambda) V^dagger``."""
    w, V, _ = _weight_eig(rho, floor)
    return log_mean(w[:, None], w[None, :]), V


def sigma_transform(X, rho=None, factors=None) -> np.ndarray:
    """``Sigma X = int_0^1 rho^a X rho^(1-a) da`` in closed form.

    ``factors`` may carry precomputed ``(L, V)`` (see :func:`gibbs_kubo_factors`).
    """
    F, V = kubo_factors(rho) if factors is None else factors
    X = _carray(X)
    return V @ (F * (V.conj().T @ X @ V)) @ V.conj().T


def sigma_inverse(Y, rho, floor: float = EIG_FLOOR) -> np.ndarray:
    """Inverse of :func:`sigma_transform`.

    Raises :class:`ConditioningError` if an eigenvalue of ``rho`` lies below
    ``floor``, since the division would amplify rounding without bound.
    """
    rho = hermitian(rho)
    w, V = np.linalg.eigh(rho)
    if w.min() < floor:
        raise ConditioningError(f"weight eigenvalue {w.min():.3e} below floor {floor:g}; "
                                f"smallest Kubo factor would be {max(w.min(), 0.0):.3e}")
    F = log_mean(w[:, None], w[None, :])
    Y = _carray(Y)
    return V @ ((V.conj().T @ Y @ V) / F) @ V.conj().T


def sigma_quadrature(X, rho, n: int = QUADRATURE_POINTS) -> np.ndarray:
    """Gauss-Legendre evaluation of the Sigma integral; a reference for tests."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    alphas = 0.5 * (nodes + 1.0)
    w, V, _ = _weight_eig(rho)
    Xt = V.conj().T @ _carray(X) @ V
    acc = np.zeros_like(Xt)
    for a, wt in zip(alphas, 0.5 * weights):
        acc += wt * (w[:, None] ** a) * Xt * (w[None, :] ** (1 - a))
    return V @ acc @ V.conj().T


def sigma_superop(rho) -> np.ndarray:
    """Matrix of ``Sigma`` acting on column-stacked operators."""
    F, V = kubo_factors(rho)
    U = np.kron(V.conj(), V)
    return (U * vec(F)) @ U.conj().T


def miracle_residual(X, H, beta: float) -> float:
    """``|| -Sigma[X, H] - (1/beta)[X, rho_beta] ||_F`` with ``Sigma`` built on ``rho_beta``.

    The Kubo factors come from the exact log-spectrum of the Gibbs state, so
    no eigenvalue flooring is involved even when ``beta H`` spans many decades.
    """
    H = hermitian(H)
    X = _carray(X)
    rho = gibbs_state(H, beta)
    lhs = -sigma_transform(X @ H - H @ X, factors=gibbs_kubo_factors(H, beta))
    rhs = (X @ rho - rho @ X) / beta
    return _fro(lhs - rhs)


# ---------------------------------------------------------------------------
# inner products
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerProductSpec:
    """Which operator inner product to use.

    ``deformed``: ``Tr(rho^a X^dagger rho^(1-a) Y)``;
    ``kubo_averaged``: the same averaged over ``a`` in [0, 1];
    ``classical_weighted``: ``Tr(rho X^dagger Y)``, the ``a = 1`` member;
    ``hilbert_schmidt``: ``Tr(X^dagger Y)``, no weight.
    """

    kind: str = "hilbert_schmidt"
    weight: np.ndarray | None = field(default=None, compare=False, repr=False)
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown inner product kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"deformation alpha must lie in [0, 1], got {self.alpha}")
        if self.kind != "hilbert_schmidt":
            if self.weight is None:
                raise ValueError(f"{self.kind} inner product needs a weight")
            w = np.linalg.eigvalsh(hermitian(self.weight))
            if w.min() < -1e-10 * max(1.0, w.max()):
                raise ValueError(f"weight is not positive semidefinite (eigenvalue {w.min():.3e})")
            if w.min() < EIG_FLOOR:
                warnings.warn(f"weight eigenvalue {w.min():.3e} will be floored",
                              EigenvalueFloorWarning, stacklevel=2)

    @property
    def dim(self) -> int | None:
        return None if self.weight is None else np.asarray(self.weight).shape[0]

    def _alpha(self) -> float:
        return 1.0 if self.kind == "classical_weighted" else self.alpha

    def gram(self, d: int | None = None) -> np.ndarray:
        """``G`` with ``(X, Y) = vec(X)^dagger G vec(Y)``."""
        if self.kind == "hilbert_schmidt":
            if d is None:
                raise ValueError("dimension required for the Hilbert-Schmidt Gram matrix")
            return np.eye(d * d, dtype=complex)
        rho = hermitian(self.weight)
        if self.kind == "kubo_averaged":
            return sigma_superop(rho)
        a = self._alpha()
        return np.kron(powm_positive(rho, a).conj(), powm_positive(rho, 1 - a))

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "deformed":
            out["alpha"] = self.alpha
        if self.weight is not None:
            out["weight"] = encode_array(np.asarray(self.weight, complex))
        return out


def inner_product(X, Y, spec: InnerProductSpec) -> complex:
    X, Y = _carray(X), _carray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"operator shapes differ: {X.shape} vs {Y.shape}")
    Xd = X.conj().T
    if spec.kind == "hilbert_schmidt":
        return complex(np.trace(Xd @ Y))
    rho = hermitian(spec.weight)
    if rho.shape != X.shape:
        raise ValueError("weight and operator dimensions differ")
    if spec.kind == "kubo_averaged":
        return complex(np.trace(Xd @ sigma_transform(Y, rho)))
    a = spec._alpha()
    return complex(np.trace(powm_positive(rho, a) @ Xd @ powm_positive(rho, 1 - a) @ Y))


def kubo_quadrature_product(X, Y, rho, n: int = QUADRATURE_POINTS) -> complex:
    """Kubo-averaged product by Gauss-Legendre quadrature over the deformation parameter."""
    return complex(np.trace(_carray(X).conj().T @ sigma_quadrature(Y, rho, n)))


def _gram_root(G: np.ndarray):
    G = 0.5 * (G + G.conj().T)
    w, V = np.linalg.eigh(G)
    if w.min() <= 0:
        raise ConditioningError(f"Gram matrix is not positive definite (eigenvalue {w.min():.3e})")
    return (V * np.sqrt(w)) @ V.conj().T, (V / np.sqrt(w)) @ V.conj().T, float(w.max() / w.min())


def superop_inner(S1, S2, spec: InnerProductSpec, d: int | None = None) -> complex:
    """Hilbert-Schmidt product of superoperators on the operator space carrying ``spec``.

    With Gram matrix ``G = W^2`` this is ``Tr((W S1 W^-1)^dagger (W S2 W^-1))``.
    """
    d = d or int(round(np.sqrt(np.asarray(S1).shape[0])))
    W, Wi, _ = _gram_root(spec.gram(d))
    A = W @ S1 @ Wi
    B = W @ S2 @ Wi
    return complex(np.vdot(A, B))


def superop_norm(S, spec: InnerProductSpec, d: int | None = None) -> float:
    return float(np.sqrt(max(superop_inner(S, S, spec, d).real, 0.0)))


# ---------------------------------------------------------------------------
# reduced Sigma and the Grabert projector
# ---------------------------------------------------------------------------

def _basis_op(n: int, d: int) -> np.ndarray:
    E = np.zeros(d * d, dtype=complex)
    E[n] = 1.0
    return unvec(E, d)


def sigma_S_matrix(rho, layout: HilbertLayout, cond_max: float = SIGMA_S_COND_MAX,
                   factors=None):
    """Matrix of ``X_S -> Tr_E Sigma(X_S (x) I_E)`` on column-stacked system operators.

    Returns ``(matrix, condition_number)``; raises :class:`ConditioningError`
    when the condition number exceeds ``cond_max``.
    """
    dS, dE = layout.dim_system, layout.dim_env
    if factors is None:
        rho = hermitian(rho)
        layout.check(rho)
        factors = kubo_factors(rho)
    F, V = factors
    Vh = V.conj().T
    cols = []
    for n in range(dS * dS):
        X = np.kron(_basis_op(n, dS), np.eye(dE))
        cols.append(vec(partial_trace_env(V @ (F * (Vh @ X @ V)) @ Vh, layout)))
    M = np.stack(cols, axis=1)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > cond_max:
        raise ConditioningError(f"Sigma_S is near-singular (condition number {cond:.3e})")
    return M, cond


def sigma_S(X_S, rho, layout: HilbertLayout) -> np.ndarray:
    return partial_trace_env(sigma_transform(np.kron(_carray(X_S), np.eye(layout.dim_env)), rho),
                             layout)


def sigma_S_inverse(Y_S, rho, layout: HilbertLayout) -> np.ndarray:
    M, _ = sigma_S_matrix(rho, layout)
    v = np.linalg.lstsq(M, vec(_carray(Y_S)), rcond=None)[0]
    return unvec(v, layout.dim_system)


class GrabertProjector:
    """``P X = Sigma_S^-1 Tr_E(Sigma X) (x) I_E`` for a fixed weight ``rho`` on the composite.

    The Kubo factors and ``Sigma_S`` are computed once. ``P`` is self-adjoint
    under the Kubo-averaged product weighted by ``rho``; its Hilbert-Schmidt
    adjoint ``P^dagger rho' = Sigma(Sigma_S^-1 Tr_E rho' (x) I_E)`` preserves the reduced state.
    """

    def __init__(self, rho, layout: HilbertLayout, cond_max: float = SIGMA_S_COND_MAX,
                 factors=None):
        self.rho = hermitian(rho)
        self.layout = layout
        layout.check(self.rho)
        self._F, self._V = kubo_factors(self.rho) if factors is None else factors
        self.sigma_S, self.condition_number = sigma_S_matrix(self.rho, layout, cond_max,
                                                             (self._F, self._V))
        self._lu = np.linalg.inv(self.sigma_S)

    @classmethod
    def for_gibbs(cls, H, beta: float, layout: HilbertLayout, **kw) -> "GrabertProjector":
        """Projector weighted by ``gibbs_state(H, beta)`` using exact Kubo factors."""
        return cls(gibbs_state(H, beta), layout, factors=gibbs_kubo_factors(H, beta), **kw)

    def _sigma(self, X):
        V, Vh = self._V, self._V.conj().T
        return V @ (self._F * (Vh @ X @ V)) @ Vh

    def _sigma_S_inv(self, Y_S):
        return unvec(self._lu @ vec(Y_S), self.layout.dim_system)

    def reduce(self, X) -> np.ndarray:
        """The system operator ``Sigma_S^-1 Tr_E(Sigma X)``."""
        X = _carray(X)
        self.layout.check(X)
        return self._sigma_S_inv(partial_trace_env(self._sigma(X), self.layout))

    def project(self, X) -> np.ndarray:
        return np.kron(self.reduce(X), np.eye(self.layout.dim_env))

    def adjoint(self, state) -> np.ndarray:
        state = _carray(state)
        self.layout.check(state)
        core = self._sigma_S_inv(partial_trace_env(state, self.layout))
        return self._sigma(np.kron(core, np.eye(self.layout.dim_env)))

    def superop(self) -> np.ndarray:
        """Matrix of ``P`` on column-stacked composite operators."""
        d = self.layout.dim
        return np.stack([vec(self.project(_basis_op(n, d))) for n in range(d * d)], axis=1)

    def adjoint_superop(self) -> np.ndarray:
        d = self.layout.dim
        return np.stack([vec(self.adjoint(_basis_op(n, d))) for n in range(d * d)], axis=1)


def grabert_project(X, rho, layout: HilbertLayout) -> np.ndarray:
    return GrabertProjector(rho, layout).project(X)


def grabert_adjoint(state, rho, layout: HilbertLayout) -> np.ndarray:
    return GrabertProjector(rho, layout).adjoint(state)


def necessary_condition_residual(X_S, rho, layout: HilbertLayout, beta: float,
                                 full_output: bool = False):
    """``|| (1/beta) Sigma_S[X_S, ln rho_S] - (1/beta)[X_S, rho_S] ||_F`` with ``rho_S = Tr_E rho``.

    Zero whenever ``rho`` factorizes; in general a finding, not an identity.
    """
    rho = hermitian(rho)
    X_S = _carray(X_S)
    rho_S = hermitian(partial_trace_env(rho, layout))
    ln_S = logm_positive(rho_S)
    M, cond = sigma_S_matrix(rho, layout)
    lhs = unvec(M @ vec(X_S @ ln_S - ln_S @ X_S), layout.dim_system) / beta
    rhs = (X_S @ rho_S - rho_S @ X_S) / beta
    res = _fro(lhs - rhs)
    if not full_output:
        return res
    return res, {"residual": res, "condition_number": cond, "beta": float(beta),
                 "lhs": encode_array(lhs), "rhs": encode_array(rhs),
                 "commutator_norm": _fro(rhs) * beta}


@dataclass
class QuantumDrift:
    """Drift term of a system observable under the Grabert projector.

    ``drift`` is ``i Sigma_S^-1 (1/beta)[X_S, rho_S]``; ``projected`` is the
    reduced part of ``P(i[H, X_S (x) I])`` evaluated without the miracle
    relation; ``hmf_form`` is ``i[H*_S, X_S]``.
    """

    drift: np.ndarray
    projected: np.ndarray
    hmf_form: np.ndarray
    hmf: np.ndarray
    chain_residual: float
    difference: float
    necessary_condition: float
    condition_number: float

    def to_dict(self) -> dict:
        return {"drift": encode_array(self.drift), "hmf_form": encode_array(self.hmf_form),
                "hmf": encode_array(self.hmf), "chain_residual": self.chain_residual,
                "difference": self.difference, "necessary_condition": self.necessary_condition,
                "condition_number": self.condition_number}


def drift_term_quantum(X_S, H, beta: float, layout: HilbertLayout, h_env=None) -> QuantumDrift:
    """Compare the Grabert drift of ``X_S`` with the commutator form ``i[H*_S, X_S]``.

    Observables evolve as ``dX/dt = i[H, X]``, so the drift of ``X_S`` is
    ``P i[H, X_S]``; by the Kubo relation this reduces to
    ``i Sigma_S^-1 (1/beta)[X_S, rho_S]``. The two agree exactly when the
    necessary condition residual vanishes (e.g. for factorized states).
    """
    H = hermitian(H)
    X_S = _carray(X_S)
    proj = GrabertProjector.for_gibbs(H, beta, layout)
    rho = proj.rho
    rho_S = hermitian(partial_trace_env(rho, layout))
    drift = 1j * proj._sigma_S_inv((X_S @ rho_S - rho_S @ X_S) / beta)
    X = np.kron(X_S, np.eye(layout.dim_env))
    projected = proj.reduce(1j * (H @ X - X @ H))
    hmf = hamiltonian_of_mean_force(H, beta, layout, h_env)
    hmf_form = 1j * (hmf @ X_S - X_S @ hmf)
    nc = necessary_condition_residual(X_S, rho, layout, beta)
    return QuantumDrift(drift, projected, hmf_form, hmf, _fro(drift - projected),
                        _fro(drift - hmf_form), nc, proj.condition_number)


# ---------------------------------------------------------------------------
# projector onto functions of a Hermitian operator
# ---------------------------------------------------------------------------

def _spectral_weights(A, rho, min_weight: float):
    values, projs = spectral_decomposition(A)
    rho = hermitian(rho)
    pw = np.einsum("ij,kji->k", rho, projs).real
    if np.any(pw <= min_weight):
        raise ConditioningError(f"weight vanishes on a spectral projector (Tr(rho Pi) = {pw.min():.3e})")
    return projs, pw, rho


def spectral_zwanzig_project(B, A, rho, min_weight: float = 1e-14) -> np.ndarray:
    """``P B = sum_j Tr(rho Pi_j B)/Tr(rho Pi_j) Pi_j`` over the spectral projectors of ``A``."""
    projs, pw, rho = _spectral_weights(A, rho, min_weight)
    B = _carray(B)
    coef = np.einsum("ij,kjl,li->k", rho, projs, B) / pw
    return np.einsum("k,kij->ij", coef, projs)


def spectral_zwanzig_adjoint(state, A, rho, min_weight: float = 1e-14) -> np.ndarray:
    """``P^dagger state = sum_j Tr(state Pi_j)/Tr(rho Pi_j) rho Pi_j``."""
    projs, pw, rho = _spectral_weights(A, rho, min_weight)
    state = _carray(state)
    coef = np.einsum("ij,kji->k", state, projs) / pw
    return rho @ np.einsum("k,kij->ij", coef, projs)


# ---------------------------------------------------------------------------
# classical-classical states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalClassicalState:
    """``sum_ij p_ij P_i (x) Q_j`` with rank-one projectors from two local bases.

    ``system_basis`` and ``env_basis`` are unitaries whose columns are the
    basis vectors; both default to the computational basis.
    """

    p: np.ndarray
    system_basis: np.ndarray | None = None
    env_basis: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or min(p.shape) < 1 or p.shape[0] < 2:
            raise ValueError("p must be a (d_S >= 2, d_E) matrix")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"probabilities must sum to 1 (got {p.sum():.15g})")
        object.__setattr__(self, "p", p)
        for name, d in (("system_basis", p.shape[0]), ("env_basis", p.shape[1])):
            U = getattr(self, name)
            U = np.eye(d, dtype=complex) if U is None else _carray(U)
            if U.shape != (d, d) or not np.allclose(U.conj().T @ U, np.eye(d), atol=1e-12):
                raise ValueError(f"{name} must be a {d}x{d} unitary")
            object.__setattr__(self, name, U)

    @property
    def layout(self) -> HilbertLayout:
        return HilbertLayout(*self.p.shape)

    @property
    def system_marginal(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def env_marginal(self) -> np.ndarray:
        return self.p.sum(axis=0)

    def density(self) -> np.ndarray:
        U = np.kron(self.system_basis, self.env_basis)
        return (U * self.p.reshape(-1)) @ U.conj().T

    def reduced_system(self) -> np.ndarray:
        U = self.system_basis
        return (U * self.system_marginal) @ U.conj().T

    def hmf_system(self, beta: float) -> np.ndarray:
        """``H*_S = sum_k h_k P_k`` with ``h_k = -(1/beta) ln p_k`` (additive constant dropped)."""
        pk = floor_eigenvalues(self.system_marginal, EIG_FLOOR, "system marginal")
        U = self.system_basis
        return (U * (-np.log(pk) / beta)) @ U.conj().T

    @classmethod
    def factorized(cls, p_system, q_env, **bases):
        return cls(np.outer(p_system, q_env), **bases)

    def mixed_with_product(self, eps: float) -> "ClassicalClassicalState":
        """``(1 - eps) p_S q_E + eps p``; the marginals do not depend on ``eps``."""
        if not 0.0 <= eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        prod = np.outer(self.system_marginal, self.env_marginal)
        return ClassicalClassicalState((1 - eps) * prod + eps * self.p,
                                       self.system_basis, self.env_basis)


@dataclass
class ProbeReport:
    """Comparison of ``q1 = -Sigma_S[X_S, H*_S]`` with ``Q2 = -Sigma^(S)[X_S, H*_S]``.

    ``Sigma_S`` uses the composite state, ``Sigma^(S)`` only its system
    marginal. ``pairs`` lists, for every off-diagonal index pair, the
    composite factor ``sum_j L(p_ij, p_kj)`` next to ``L(p_i, p_k)``.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    residual: float
    pairs: list
    quadrature_agreement: float
    commutator_norm: float
    beta: float
    p: np.ndarray
    X_S: np.ndarray

    @property
    def max_factor_gap(self) -> float:
        return max((abs(r["gap"]) for r in self.pairs), default=0.0)

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "beta": self.beta, "X_S": encode_array(self.X_S),
                "lhs": encode_array(self.lhs), "rhs": encode_array(self.rhs),
                "residual": self.residual, "commutator_norm": self.commutator_norm,
                "quadrature_agreement": self.quadrature_agreement,
                "max_factor_gap": self.max_factor_gap, "pairs": self.pairs}


def appendix_probe(state: ClassicalClassicalState, X_S, beta: float) -> ProbeReport:
    """Evaluate ``q1`` and ``Q2`` in closed form and cross-check both by quadrature.

    In the local eigenbasis the commutator is ``C_ik = X_ik (h_k - h_i)`` and
    ``q1_ik = -C_ik sum_j L(p_ij, p_kj)``, ``Q2_ik = -C_ik L(p_i, p_k)``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    p = state.p
    if np.any(p <= 0):
        p = floor_eigenvalues(p, EIG_FLOOR, "joint probabilities")
        p = p / p.sum()
    pk = p.sum(axis=1)
    dS = p.shape[0]
    X_S = _carray(X_S)
    U = state.system_basis
    Xt = U.conj().T @ X_S @ U
    h = -np.log(pk) / beta
    C = Xt * (h[None, :] - h[:, None])
    joint = log_mean(p[:, None, :], p[None, :, :]).sum(axis=2)
    marg = log_mean(pk[:, None], pk[None, :])
    q1 = U @ (-C * joint) @ U.conj().T
    Q2 = U @ (-C * marg) @ U.conj().T

    # independent path: explicit operators and alpha-quadrature
    layout = state.layout
    full = ClassicalClassicalState(p, state.system_basis, state.env_basis)
    comm = U @ C @ U.conj().T
    q1_quad = -partial_trace_env(sigma_quadrature(np.kron(comm, np.eye(layout.dim_env)),
                                                  full.density()), layout)
    Q2_quad = -sigma_quadrature(comm, full.reduced_system())
    agreement = max(_fro(q1 - q1_quad), _fro(Q2 - Q2_quad))

    pairs = []
    for i in range(dS):
        for k in range(dS):
            if i != k:
                pairs.append({"i": i, "k": k, "joint_factor": float(joint[i, k]),
                              "marginal_factor": float(marg[i, k]),
                              "gap": float(marg[i, k] - joint[i, k]),
                              "commutator_element": abs(complex(C[i, k]))})
    return ProbeReport(q1, Q2, _fro(q1 - Q2), pairs, agreement, _fro(C), float(beta),
                       p, X_S)


def correlation_sweep(state: ClassicalClassicalState, X_S, beta: float, eps_values) -> list:
    """Probe ``p(eps) = (1 - eps) p_S q_E + eps p`` for each ``eps``; one record per value."""
    rows = []
    for eps in eps_values:
        rep = appendix_probe(state.mixed_with_product(float(eps)), X_S, beta)
        rows.append({"eps": float(eps), "residual": rep.residual,
                     "max_factor_gap": rep.max_factor_gap,
                     "quadrature_agreement": rep.quadrature_agreement})
    return rows
