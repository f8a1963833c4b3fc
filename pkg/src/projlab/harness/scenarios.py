"""Built-in scenarios."""

from __future__ import annotations

import copy

from .config import validate

_RAW = [
    {
        "id": "harmonic-pair-default",
        "kind": "classical_drift",
        "seed": 1,
        "description": ("Harmonic system oscillator bilinearly coupled to one environment oscillator "
                        "(m = k = 1, c = 0.5, beta = 1). Checks, bin by bin, that the conditional "
                        "drift of (q_S, p_S) equals the Poisson bracket with the histogram "
                        "Hamiltonian of mean force, and fits the effective spring constant "
                        "against the Gaussian closed form k - c^2/k."),
        "physical": {"system": "harmonic_pair", "c": 0.5, "beta": 1.0},
    },
    {
        "id": "quartic-pair-default",
        "kind": "classical_drift",
        "seed": 2,
        "description": ("Harmonic pair with an extra quartic coupling lambda q_S^2 q_E^2 "
                        "(lambda = 0.1), so the mean force is non-Gaussian. Same drift check, and "
                        "the histogram Hamiltonian of mean force is compared with direct "
                        "quadrature over the environment."),
        "physical": {"system": "quartic_pair", "c": 0.5, "lam": 0.1, "beta": 1.0},
    },
    {
        "id": "relevant-density-default",
        "kind": "relevant_density",
        "seed": 3,
        "description": ("Equation of motion of the macroscopic density p(q_S, p_S, t) in the "
                        "harmonic pair. In equilibrium both the Poisson bracket of p with the "
                        "Hamiltonian of mean force and the finite-difference dp/dt must vanish "
                        "within error bars."),
        "physical": {"system": "harmonic_pair", "c": 0.5, "beta": 1.0},
    },
    {
        "id": "quantum-innerproduct-default",
        "kind": "quantum_innerproduct",
        "seed": 4,
        "description": ("Kubo-averaged scalar product machinery on random Hamiltonians: the Kubo "
                        "relation -Sigma[X, H] = (1/beta)[X, rho], the reduced transformation "
                        "Sigma_S and the Grabert projector, and the condition under which the "
                        "projected drift of a system observable is a commutator with the "
                        "Hamiltonian of mean force (exact for uncorrelated equilibrium states, "
                        "probed for a two-qubit state with g sigma_x sigma_x coupling)."),
        "physical": {"dim_system": 2, "dim_env": 2, "g": 0.5, "beta": 1.0},
    },
    {
        "id": "appendix-probe-default",
        "kind": "appendix_probe",
        "seed": 5,
        "description": ("Open question for states that are diagonal in a local product basis "
                        "(classical-classical states): does the reduced Kubo transformation of "
                        "[X_S, H*_S] built from the joint probabilities (q1) agree with the one "
                        "built from the system marginal (Q2)? Both closed forms are evaluated, "
                        "cross-checked by quadrature, and swept from the uncorrelated product "
                        "state to a correlated one."),
        "physical": {"p": [[0.4, 0.1], [0.1, 0.4]], "beta": 1.0, "observable": "sigma_x"},
    },
    {
        "id": "tcl-split-default",
        "kind": "tcl_split",
        "seed": 6,
        "description": ("Qubit coupled to a two-qubit environment. Builds the exact reduced map, "
                        "its time-local generator, and the minimal-dissipation split under the "
                        "Hilbert-Schmidt and weighted scalar products; reports work flux and the "
                        "distance of the effective Hamiltonian from the Hamiltonian of mean force."),
        "physical": {"dim_env": 4, "omega": 1.0, "g": 0.2, "beta": 1.0},
    },
    {
        "id": "decomposition-identity-default",
        "kind": "decomposition_identity",
        "seed": 7,
        "description": ("Exact propagator decomposition e^{Lt} = e^{Lt}P + memory integral + "
                        "orthogonal term, at superoperator level for random two-qubit "
                        "Liouvillians with the Grabert projector, in the observable and the "
                        "state picture."),
        "physical": {"dim_system": 2, "dim_env": 2, "beta": 1.0},
    },
]

BUILTIN = {raw["id"]: raw for raw in _RAW}


def builtin(scenario_id: str) -> dict:
    """Validated copy of a built-in scenario; ``KeyError`` if unknown."""
    return validate(copy.deepcopy(BUILTIN[scenario_id]))


def list_ids() -> list[str]:
    return list(BUILTIN)
