"""projlab: numerical checks of projection-operator coarse graining.

Modules
-------
quantum    operator algebra on bipartite Hilbert spaces, Gibbs states, mean force
classical  phase-space systems, Poisson brackets, integration, canonical sampling
meanforce  binned Hamiltonian of mean force, mean force and macroscopic densities
zwanzig    classical Zwanzig projector and drift comparisons
inner      weighted scalar products, Kubo transformation, Grabert projector
tcl        reduced maps, time-local generators and minimal-dissipation splitting
harness    scenario configs and the ``projlab`` command
"""

__version__ = "0.1.0"
