"""
Classical phase-space mechanics for a system coupled to an environment.

A phase point is a real vector ``(q_1..q_n, p_1..p_n)`` with the system
coordinates first, ``n = n_system + n_env``. Observables evolve as
``dA/dt = {A, H}`` with ``{f, g} = sum(df/dq dg/dp - df/dp dg/dq)``; the
Liouvillian action used everywhere is ``iL A = {A, H}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FD_STEP = 1e-5


class UnsupportedScenarioError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


def _fd_gradient(func, x, scale=1.0):
    """Central finite-difference gradient over the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    h = FD_STEP * scale
    grad = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        grad[..., i] = (np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2 * h)
    return grad


@dataclass(frozen=True)
class ClassicalSystem:
    """Hamiltonian ``H = sum p^2 / 2m + V(q)`` or a general ``H(Gamma)``.

    ``potential`` and ``force`` are vectorized over leading axes of the
    position array. A ``hamiltonian`` callable makes the system general
    (non-separable): gradients then come from finite differences and
    trajectory integration is unavailable.
    """

    n_system: int
    n_env: int
    masses: np.ndarray
    potential: Callable | None = None
    force: Callable | None = None
    hamiltonian_fn: Callable | None = None
    params: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "masses", np.broadcast_to(
            np.asarray(self.masses, dtype=float), (self.n_dof,)).copy())
        if self.potential is None and self.hamiltonian_fn is None:
            raise ValueError("need a potential or a general hamiltonian")

    @property
    def n_dof(self) -> int:
        return self.n_system + self.n_env

    @property
    def dim(self) -> int:
        return 2 * self.n_dof

    @property
    def separable(self) -> bool:
        return self.hamiltonian_fn is None

    def split(self, points):
        points = np.asarray(points, dtype=float)
        return points[..., : self.n_dof], points[..., self.n_dof:]

    def system_indices(self) -> np.ndarray:
        """Indices of the relevant variables ``Gamma_S = (q_S, p_S)`` inside a phase point."""
        s = np.arange(self.n_system)
        return np.concatenate([s, s + self.n_dof])

    def hamiltonian(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.hamiltonian_fn is not None:
            return np.asarray(self.hamiltonian_fn(points))
        q, p = self.split(points)
        return 0.5 * np.sum(p * p / self.masses, axis=-1) + self.potential(q)

    def potential_force(self, q) -> np.ndarray:
        if self.force is not None:
            return self.force(q)
        return -_fd_gradient(self.potential, q)

    def gradient(self, points) -> np.ndarray:
        """``grad_Gamma H`` with the (q, p) block layout."""
        points = np.asarray(points, dtype=float)
        if self.hamiltonian_fn is not None:
            return _fd_gradient(self.hamiltonian_fn, points)
        q, p = self.split(points)
        return np.concatenate([-self.potential_force(q), p / self.masses], axis=-1)

    def gradient_self_test(self, points, rtol: float = 1e-6) -> float:
        """Max relative deviation of :meth:`gradient` from central differences."""
        points = np.atleast_2d(points)
        g = self.gradient(points)
        fd = _fd_gradient(self.hamiltonian, points)
        err = np.max(np.abs(g - fd)) / max(1.0, float(np.max(np.abs(g))))
        if err > rtol:
            raise AssertionError(f"gradient deviates from finite differences by {err:.2e}")
        return float(err)


def symplectic_matrix(n_dof: int) -> np.ndarray:
    """``J = [[0, I], [-I, 0]]``."""
    I = np.eye(n_dof)
    Z = np.zeros((n_dof, n_dof))
    return np.block([[Z, I], [-I, Z]])


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

def harmonic_star(n_env: int = 1, m: float = 1.0, k: float = 1.0, c: float = 0.5) -> ClassicalSystem:
    """One system oscillator bilinearly coupled (``c q_S q_j``) to ``n_env`` bath oscillators."""
    def potential(q):
        qs, qe = q[..., 0], q[..., 1:]
        return 0.5 * k * (qs ** 2 + np.sum(qe ** 2, axis=-1)) + c * qs * np.sum(qe, axis=-1)

    def force(q):
        qs, qe = q[..., :1], q[..., 1:]
        fs = -(k * qs + c * np.sum(qe, axis=-1, keepdims=True))
        fe = -(k * qe + c * qs)
        return np.concatenate([fs, fe], axis=-1)

    name = "harmonic_pair" if n_env == 1 else "harmonic_star"
    return ClassicalSystem(1, n_env, m, potential, force,
                           params={"m": m, "k": k, "c": c, "n_env": n_env}, name=name)


def harmonic_pair(m: float = 1.0, k: float = 1.0, c: float = 0.5) -> ClassicalSystem:
    return harmonic_star(1, m, k, c)


def quartic_pair(m: float = 1.0, k: float = 1.0, c: float = 0.5, lam: float = 0.1) -> ClassicalSystem:
    """Harmonic pair plus ``lam * q_S^2 q_E^2``."""
    def potential(q):
        qs, qe = q[..., 0], q[..., 1]
        return 0.5 * k * (qs ** 2 + qe ** 2) + c * qs * qe + lam * qs ** 2 * qe ** 2

    def force(q):
        qs, qe = q[..., 0], q[..., 1]
        fs = -(k * qs + c * qe + 2 * lam * qs * qe ** 2)
        fe = -(k * qe + c * qs + 2 * lam * qs ** 2 * qe)
        return np.stack([fs, fe], axis=-1)

    return ClassicalSystem(1, 1, m, potential, force,
                           params={"m": m, "k": k, "c": c, "lam": lam}, name="quartic_pair")


def single_oscillator(m: float = 1.0, k: float = 1.0) -> ClassicalSystem:
    """A bare oscillator (no environment), used for sampler and integrator checks."""
    return ClassicalSystem(1, 0, m, lambda q: 0.5 * k * np.sum(q ** 2, axis=-1),
                           lambda q: -k * q, params={"m": m, "k": k}, name="oscillator")


def free_particle(m: float = 1.0) -> ClassicalSystem:
    return ClassicalSystem(1, 0, m, lambda q: np.zeros(q.shape[:-1]),
                           lambda q: np.zeros_like(q), params={"m": m}, name="free")


# ---------------------------------------------------------------------------
# observables and brackets
# ---------------------------------------------------------------------------

class Observable:
    """A phase function with an optional analytic gradient."""

    def __init__(self, func, grad=None, name: str = ""):
        self.func = func
        self.grad = grad
        self.name = name

    def __call__(self, points):
        return self.func(np.asarray(points, dtype=float))

    def gradient(self, points):
        if self.grad is not None:
            return self.grad(np.asarray(points, dtype=float))
        return _fd_gradient(self.func, points)

    def __repr__(self):
        return f"Observable({self.name or self.func!r})"


def coordinate(index: int, name: str = "") -> Observable:
    """The phase-space coordinate ``Gamma[index]``."""
    def grad(points):
        g = np.zeros_like(points)
        g[..., index] = 1.0
        return g

    return Observable(lambda x: x[..., index], grad, name or f"Gamma[{index}]")


def relevant_observables(system: ClassicalSystem) -> list[Observable]:
    """``A = Gamma_S = (q_S..., p_S...)``."""
    names = [f"q_S{i}" for i in range(system.n_system)] + [f"p_S{i}" for i in range(system.n_system)]
    return [coordinate(int(i), n) for i, n in zip(system.system_indices(), names)]


def _as_gradient(f, points):
    if isinstance(f, Observable):
        g = f.gradient(points)
    elif isinstance(f, ClassicalSystem):
        g = f.gradient(points)
    else:
        g = _fd_gradient(f, points)
    if not np.all(np.isfinite(g)):
        raise ArithmeticError("non-finite gradient in Poisson bracket")
    return g


def poisson_bracket(f, g, point) -> np.ndarray:
    """``{f, g}`` at one or many phase points.

    ``f`` and ``g`` are :class:`Observable`, :class:`ClassicalSystem`
    (meaning its Hamiltonian) or plain callables (finite differences).
    """
    point = np.asarray(point, dtype=float)
    n = point.shape[-1] // 2
    gf = _as_gradient(f, point)
    gg = _as_gradient(g, point)
    return np.sum(gf[..., :n] * gg[..., n:] - gf[..., n:] * gg[..., :n], axis=-1)


def liouvillian_drift(observables, point, system: ClassicalSystem) -> np.ndarray:
    """``iL A = {A, H}`` for each observable; shape ``(..., len(observables))``."""
    point = np.asarray(point, dtype=float)
    gH = system.gradient(point)
    n = system.n_dof
    J_gradH = np.concatenate([gH[..., n:], -gH[..., :n]], axis=-1)
    out = []
    for A in observables:
        gA = _as_gradient(A, point)
        out.append(np.sum(gA * J_gradH, axis=-1))
    return np.stack(out, axis=-1)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def _check_integrable(system: ClassicalSystem):
    if not system.separable:
        raise UnsupportedScenarioError(
            "velocity Verlet needs a separable H = T(p) + V(q); this system is general")


def propagate(points, system: ClassicalSystem, t: float, dt: float = 1e-3) -> np.ndarray:
    """Velocity-Verlet evolution of one or many phase points by time ``t``.

    ``dt`` is shrunk so an integer number of steps lands exactly on ``t``.
    """
    _check_integrable(system)
    if dt <= 0:
        raise ValueError("dt must be positive")
    points = np.array(points, dtype=float)
    if t == 0:
        return points
    n_steps = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    h = t / n_steps
    q, p = system.split(points)
    q, p = q.copy(), p.copy()
    m = system.masses
    f = system.potential_force(q)
    for _ in range(n_steps):
        p += 0.5 * h * f
        q += h * p / m
        f = system.potential_force(q)
        p += 0.5 * h * f
    return np.concatenate([q, p], axis=-1)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray

    def energy_drift(self, system: ClassicalSystem) -> float:
        E = system.hamiltonian(self.points)
        return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))


def integrate_trajectory(point, system: ClassicalSystem, t_final: float, dt: float = 1e-3,
                         record_every: int = 1) -> Trajectory:
    """Velocity-Verlet trajectory from ``point``; frames every ``record_every`` steps."""
    _check_integrable(system)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    n_steps = int(np.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else dt
    q, p = system.split(np.asarray(point, dtype=float))
    q, p = q.copy(), p.copy()
    m = system.masses
    f = system.potential_force(q)
    times, frames = [0.0], [np.concatenate([q, p])]
    for step in range(1, n_steps + 1):
        p += 0.5 * h * f
        q += h * p / m
        f = system.potential_force(q)
        p += 0.5 * h * f
        if step % record_every == 0 or step == n_steps:
            times.append(step * h)
            frames.append(np.concatenate([q, p]))
    return Trajectory(np.array(times), np.array(frames))


def quadratic_matrices(system: ClassicalSystem):
    """Mass vector and potential Hessian of a strictly quadratic built-in system."""
    prm = system.params
    if system.name in ("harmonic_pair", "harmonic_star"):
        n = system.n_dof
        K = prm["k"] * np.eye(n)
        K[0, 1:] = K[1:, 0] = prm["c"]
        return system.masses, K
    if system.name == "oscillator":
        return system.masses, np.array([[prm["k"]]])
    if system.name == "quartic_pair" and prm["lam"] == 0:
        return system.masses, np.array([[prm["k"], prm["c"]], [prm["c"], prm["k"]]])
    raise UnsupportedScenarioError(f"{system.name} is not a quadratic scenario")


def normal_mode_propagator(system: ClassicalSystem, t: float) -> np.ndarray:
    """Exact linear flow map ``Gamma(t) = M(t) Gamma(0)`` of a quadratic system."""
    m, K = quadratic_matrices(system)
    n = len(m)
    s = 1.0 / np.sqrt(m)
    D = s[:, None] * K * s[None, :]
    w2, U = np.linalg.eigh(D)
    if np.any(w2 <= 0):
        raise UnsupportedScenarioError("potential is not positive definite")
    w = np.sqrt(w2)
    C = (U * np.cos(w * t)) @ U.T
    S_over_w = (U * (np.sin(w * t) / w)) @ U.T
    wS = (U * (w * np.sin(w * t))) @ U.T
    # mass-weighted coordinates x = sqrt(m) q, v = p / sqrt(m)
    Mq_q = s[:, None] * C / s[None, :]
    Mq_p = s[:, None] * S_over_w * s[None, :]
    Mp_q = -(1 / s)[:, None] * wS / s[None, :]
    Mp_p = (1 / s)[:, None] * C * s[None, :]
    return np.block([[Mq_q, Mq_p], [Mp_q, Mp_p]]).reshape(2 * n, 2 * n)


# ---------------------------------------------------------------------------
# canonical sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    """Canonical-ensemble draws, merged in chain-index order.

    ``inefficiency`` is the statistical inefficiency ``g = 1 + 2 tau_int``
    (in thinned samples); standard errors built on this set divide counts by
    ``g``.
    """

    points: np.ndarray
    beta: float
    seed: int
    n_chains: int
    acceptance_rate: float
    step_size: float
    inefficiency: float
    chain_index: np.ndarray
    system_name: str = ""
    relevant_indices: tuple = (0,)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_points(cls, points, beta: float, relevant_indices, seed: int = -1,
                    inefficiency: float = 1.0, chain_index=None, system_name: str = ""):
        """Wrap externally generated points (e.g. a displaced ensemble)."""
        points = np.asarray(points, dtype=float)
        if not np.all(np.isfinite(points)):
            raise ValueError("non-finite points")
        chain_index = np.zeros(len(points), int) if chain_index is None else np.asarray(chain_index)
        n_chains = int(chain_index.max()) + 1 if len(chain_index) else 1
        return cls(points, float(beta), seed, n_chains, float("nan"), float("nan"),
                   float(inefficiency), chain_index, system_name, tuple(int(i) for i in relevant_indices))

    def relevant(self) -> np.ndarray:
        """Values of the relevant observables ``A = Gamma_S`` for every sample."""
        return self.points[:, list(self.relevant_indices)]

    @property
    def effective_size(self) -> float:
        return len(self.points) / self.inefficiency


def integrated_autocorrelation(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time of a 1-d series with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = x.var()
    if n < 4 or var == 0:
        return 0.5
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n] / (var * n)
    tau = 0.5
    for lag in range(1, n):
        tau += acf[lag]
        if lag >= c * tau:
            break
    return max(float(tau), 0.5)


def sample_canonical(system: ClassicalSystem, beta: float, n_samples: int, seed: int = 0,
                     n_chains: int = 8, burn_in: int = 10_000, thin: int = 10,
                     step_size: float | None = None, target_acceptance: float = 0.4,
                     init=None, block: int = 4096) -> SampleSet:
    """Random-walk Metropolis sampling of ``exp(-beta H) / Z``.

    Chains advance in lockstep (vectorized) but use independent proposals;
    the step size is tuned during burn-in toward ``target_acceptance`` unless
    given. Output is deterministic in ``(seed, n_chains, parameters)``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    dim = system.dim
    per_chain = -(-n_samples // n_chains)
    x = np.zeros((n_chains, dim)) if init is None else np.array(np.broadcast_to(init, (n_chains, dim)), float)
    e = system.hamiltonian(x)
    tune = step_size is None
    log_step = np.log(1.0 / np.sqrt(beta) if step_size is None else step_size)
    accepted_window = 0
    window = 0

    def draws(n):
        return rng.standard_normal((n, n_chains, dim)), np.log(rng.random((n, n_chains)))

    # burn-in with Robbins-Monro adaptation of a shared step size
    done = 0
    while done < burn_in:
        nb = min(block, burn_in - done)
        noise, logu = draws(nb)
        for i in range(nb):
            step = np.exp(log_step)
            prop = x + step * noise[i]
            e_prop = system.hamiltonian(prop)
            acc = logu[i] < -beta * (e_prop - e)
            x = np.where(acc[:, None], prop, x)
            e = np.where(acc, e_prop, e)
            if tune:
                rate = acc.mean()
                log_step += (rate - target_acceptance) / np.sqrt(1.0 + (done + i) / 10.0)
        done += nb

    step = float(np.exp(log_step))
    n_steps = per_chain * thin
    out = np.empty((per_chain, n_chains, dim))
    n_acc = 0
    done = 0
    while done < n_steps:
        nb = min(block, n_steps - done)
        noise, logu = draws(nb)
        noise *= step
        for i in range(nb):
            prop = x + noise[i]
            e_prop = system.hamiltonian(prop)
            acc = logu[i] < -beta * (e_prop - e)
            x = np.where(acc[:, None], prop, x)
            e = np.where(acc, e_prop, e)
            n_acc += int(acc.sum())
            k = done + i + 1
            if k % thin == 0:
                out[k // thin - 1] = x
        done += nb

    rate = n_acc / (n_steps * n_chains)
    if not np.all(np.isfinite(out)):
        raise SamplingError("non-finite sample encountered")
    if not 0.1 <= rate <= 0.9:
        raise SamplingError(
            f"acceptance rate {rate:.3f} outside [0.1, 0.9]; pass step_size explicitly")

    taus = [integrated_autocorrelation(out[:, c, j]) for c in range(n_chains) for j in range(dim)]
    g = max(1.0, 2.0 * float(np.max(taus)))
    points = out.transpose(1, 0, 2).reshape(-1, dim)
    chain_index = np.repeat(np.arange(n_chains), per_chain)
    return SampleSet(points, float(beta), int(seed), int(n_chains), float(rate), step, g,
                     chain_index, system.name, tuple(int(i) for i in system.system_indices()))


# ---------------------------------------------------------------------------
# Gaussian oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticHMF:
    """``H*(Gamma_S) = p_S^2 / 2m + q_S K_eff q_S / 2 + const``."""

    masses: np.ndarray
    stiffness: np.ndarray
    constant: float

    def __call__(self, gamma_s):
        gamma_s = np.asarray(gamma_s, dtype=float)
        n = len(self.masses)
        q, p = gamma_s[..., :n], gamma_s[..., n:]
        return (0.5 * np.sum(p * p / self.masses, axis=-1)
                + 0.5 * np.einsum("...i,ij,...j->...", q, self.stiffness, q) + self.constant)

    def gradient(self, gamma_s):
        gamma_s = np.asarray(gamma_s, dtype=float)
        n = len(self.masses)
        q, p = gamma_s[..., :n], gamma_s[..., n:]
        return np.concatenate([q @ self.stiffness.T, p / self.masses], axis=-1)

    def free_energy(self, beta: float) -> float:
        """``-(1/beta) ln int exp(-beta H*) dGamma_S``."""
        n = len(self.masses)
        ln_z = (n * np.log(2 * np.pi / beta) + 0.5 * np.sum(np.log(self.masses))
                - 0.5 * np.linalg.slogdet(self.stiffness)[1] - beta * self.constant)
        return float(-ln_z / beta)


def gaussian_hmf_oracle(system: ClassicalSystem, beta: float = 1.0) -> QuadraticHMF:
    """Integrate the environment out of a quadratic system analytically.

    The effective stiffness is the Schur complement ``K_SS - K_SE K_EE^-1 K_ES``;
    the constant follows the ``Z* = Z / Z_E`` gauge with ``H_E`` the bare
    environment oscillators.
    """
    m, K = quadratic_matrices(system)
    ns = system.n_system
    Kss, Kse, Kee = K[:ns, :ns], K[:ns, ns:], K[ns:, ns:]
    if Kee.size:
        if np.any(np.linalg.eigvalsh(Kee) <= 0):
            raise ValueError("environment block is not positive definite")
        K_eff = Kss - Kse @ np.linalg.solve(Kee, Kse.T)
        # Z_E built from the bare environment block k * I (no coupling)
        Kee_bare = system.params["k"] * np.eye(Kee.shape[0])
        const = 0.5 / beta * (np.linalg.slogdet(Kee)[1] - np.linalg.slogdet(Kee_bare)[1])
    else:
        K_eff, const = Kss, 0.0
    return QuadraticHMF(m[:ns].copy(), K_eff, float(const))
