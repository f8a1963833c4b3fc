"""Time-local generator of a qubit in a small environment and its minimal-dissipation split."""

import numpy as np

from projlab import inner as ip
from projlab import quantum as qm
from projlab import tcl

rng = np.random.default_rng(6)
sx = np.array([[0, 1], [1, 0]], complex)
sz = np.diag([1.0, -1.0]).astype(complex)

dE, beta, g = 4, 1.0, 0.2
HS = 0.5 * sz
HE = qm.random_hermitian(dE, rng)
B = qm.random_hermitian(dE, rng)
H = np.kron(HS, np.eye(dE)) + np.kron(np.eye(2), HE) + g * np.kron(sx, B / np.linalg.norm(B, 2))
layout = qm.HilbertLayout(2, dE)

dyn = tcl.ReducedDynamics(H, qm.gibbs_state(HE, beta), layout)
times = np.linspace(0.0, 10.0, 201)
series = dyn.series(times)
gens = tcl.tcl_generator(series)
print(f"smallest singular value of V(t): {gens.sigma_min.min():.3f}, gaps: {gens.n_gaps}")

states = series.apply(np.diag([1.0, 0.0]))
hmf, info = qm.hamiltonian_of_mean_force(H, beta, layout, h_env=HE, full_output=True)
for label, spec in [("Hilbert-Schmidt", None),
                    ("Kubo, reduced equilibrium weight",
                     ip.InnerProductSpec("kubo_averaged", info["reduced_state"]))]:
    splits = tcl.split_series(gens, spec)
    flux, work = tcl.work_flux(splits, states)
    dist = tcl.compare_heff_hmf(splits, hmf)["distance"][-1]
    print(f"{label}: work W(10) = {work[-1]:+.2e}, |D| <= {np.nanmax(splits.dissipator_norm):.3f}, "
          f"|H_eff - H*_S| at t = 10: {dist:.4f}")
