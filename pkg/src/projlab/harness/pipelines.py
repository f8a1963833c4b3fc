"""One pipeline per scenario kind.

Each pipeline takes a validated config and returns a :class:`PipelineResult`
holding JSON-ready results, CSV tables and a few headline scalars used by
``sweep``. Pipelines are deterministic given the config (including its seed).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import classical as cl
from .. import inner as ip
from .. import meanforce as mf
from .. import quantum as qm
from .. import tcl
from .. import zwanzig as zw

log = logging.getLogger("projlab.harness")

PAULI = {
    "sigma_x": np.array([[0, 1], [1, 0]], complex),
    "sigma_y": np.array([[0, -1j], [1j, 0]], complex),
    "sigma_z": np.array([[1, 0], [0, -1]], complex),
}


@dataclass
class PipelineResult:
    results: dict
    tables: dict = field(default_factory=dict)
    headline: dict = field(default_factory=dict)


def table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else repr(float(x))
    return str(x)


# ---------------------------------------------------------------------------
# classical
# ---------------------------------------------------------------------------

def build_system(ph: dict) -> cl.ClassicalSystem:
    m, k, c = ph["mass"], ph["k"], ph["c"]
    if ph["system"] == "quartic_pair":
        return cl.quartic_pair(m, k, c, ph["lam"])
    if ph["system"] == "harmonic_star" or ph["n_env"] != 1:
        return cl.harmonic_star(ph["n_env"], m, k, c)
    return cl.harmonic_pair(m, k, c)


def _samples(system, ph, nu, seed) -> cl.SampleSet:
    log.info("sampling %d points from the canonical ensemble", nu["samples"])
    return cl.sample_canonical(system, ph["beta"], nu["samples"], seed=seed, n_chains=nu["chains"],
                               burn_in=nu["burn_in"], thin=nu["thin"])


def _is_quadratic(system) -> bool:
    return system.params.get("lam", 0.0) == 0.0


def compare_with_quadrature(hmf: mf.BinnedField, reference: np.ndarray, min_count: int,
                            z: float = 3.0) -> dict:
    """Compare a histogram ``H*`` with a deterministic one after fitting the additive constant."""
    m = hmf.populated & (hmf.counts >= min_count)
    d = (hmf.values - reference)[m]
    w = 1.0 / hmf.stderr[m] ** 2
    offset = float(np.sum(d * w) / np.sum(w))
    zz = (d - offset) / hmf.stderr[m]
    return {"n_bins": int(m.sum()), "gauge_offset": offset,
            "fraction_within": float(np.mean(np.abs(zz) <= z)),
            "chi2_per_bin": float(np.mean(zz ** 2)), "z_threshold": z}


def run_classical_drift(cfg: dict) -> PipelineResult:
    system = build_system(cfg["physical"])
    return analyse_classical_drift(cfg, system, _samples(system, cfg["physical"], cfg["numerical"],
                                                         cfg["seed"]))


def analyse_classical_drift(cfg: dict, system: cl.ClassicalSystem, S: cl.SampleSet) -> PipelineResult:
    """The classical-drift analysis on an already drawn sample set."""
    ph, nu = cfg["physical"], cfg["numerical"]
    beta = ph["beta"]
    grid = mf.BinGrid.phase_space(system.n_system, nu["half_width"], nu["bins"])
    report = zw.drift_residual_report(S, grid, system, min_count=nu["min_count"], z=nu["z"],
                                      scenario_id=cfg["id"])
    hmf = mf.estimate_hmf(S, grid, inefficiency=report.extras["inefficiency"])
    mask = hmf.counts >= nu["min_count"]
    M, b, c0, cov = mf.fit_quadratic(hmf, mask)
    n = grid.ndim
    k_idx = 1 + n  # first diagonal entry of M in the parameter vector
    results = {
        "drift": report.summary(),
        "sampling": {"acceptance_rate": S.acceptance_rate, "step_size": S.step_size,
                     "coordinate_inefficiency": S.inefficiency,
                     "bin_inefficiency": report.extras["inefficiency"], "n_samples": len(S)},
        "hmf_fit": {"k_eff": float(M[0, 0]), "k_eff_stderr": float(np.sqrt(cov[k_idx, k_idx])),
                    "inverse_mass": float(M[n // 2, n // 2]), "intercept": c0,
                    "linear": [float(x) for x in b]},
        "hmf_offset": hmf.offset,
        "grid": grid.to_dict(),
    }
    headline = {"acceptance_fraction": report.acceptance_fraction,
                "chi2_per_dof": report.chi2 / max(report.dof, 1), "k_eff_fit": float(M[0, 0])}
    if _is_quadratic(system):
        oracle = cl.gaussian_hmf_oracle(system, beta)
        k_or = float(oracle.stiffness[0, 0])
        f_est = mf.free_energy(hmf, beta) - c0
        f_or = cl.QuadraticHMF(oracle.masses, oracle.stiffness, 0.0).free_energy(beta)
        results["oracle"] = {"k_eff": k_or, "relative_error": abs(M[0, 0] - k_or) / k_or,
                             "free_energy_regauged": f_est, "free_energy_closed_form": f_or}
        headline["k_eff_oracle"] = k_or
    elif system.n_system == 1 and system.n_env == 1:
        ref = mf.quadrature_hmf(system, beta, grid)
        results["quadrature"] = compare_with_quadrature(hmf, ref, nu["min_count"], nu["z"])
        headline["quadrature_fraction_within"] = results["quadrature"]["fraction_within"]
    return PipelineResult(results, {"drift_residual.csv": report.to_csv(), "hmf.csv": hmf.to_csv()},
                          headline)


def run_relevant_density(cfg: dict) -> PipelineResult:
    ph, nu = cfg["physical"], cfg["numerical"]
    system = build_system(ph)
    S = _samples(system, ph, nu, cfg["seed"])
    grid = mf.BinGrid.phase_space(system.n_system, nu["half_width"], nu["bins"])
    g = mf.binned_inefficiency(S, grid)
    hmf = mf.estimate_hmf(S, grid, inefficiency=g)
    mask = mf.interior_mask(hmf.populated) & (hmf.counts >= nu["min_count"])
    p = zw.equilibrium_density(S, grid)
    bracket = zw.relevant_density_drift(p, hmf)
    dpdt = zw.density_time_derivative(S, system, grid, delta=nu["delta"], dt=nu["dt"])
    fb, cb = zw.field_z_fraction(bracket, mask, nu["z"])
    fd, cd = zw.field_z_fraction(dpdt, mask, nu["z"])
    results = {
        "equilibrium": {
            "n_bins": int(mask.sum()), "bin_inefficiency": g,
            "bracket_fraction_within": fb, "bracket_chi2_per_bin": cb,
            "dpdt_fraction_within": fd, "dpdt_chi2_per_bin": cd,
            "dpdt_halving_max_z": dpdt.meta.get("halving_max_z"),
            "dpdt_halving_fraction_within": dpdt.meta.get("halving_fraction_within_3"),
        },
        "grid": grid.to_dict(),
    }
    # displaced ensemble: the mean of p(alpha, t) against the exact linear flow
    shift = np.zeros(system.dim)
    shift[0] = ph["displacement"]
    initial = cl.SampleSet.from_points(S.points + shift, S.beta, S.relevant_indices, S.seed,
                                       S.inefficiency, S.chain_index, S.system_name)
    fields = mf.estimate_p_alpha_t(initial, system, grid, nu["times"], nu["dt"])
    rows = []
    centers = grid.centers().reshape(-1, grid.ndim)
    mean0 = initial.points.mean(axis=0)
    for t, fld in zip(nu["times"], fields):
        w = fld.values.reshape(-1) * grid.volume
        mean_q = float(np.sum(w * centers[:, 0]))
        if _is_quadratic(system):
            exact = float((cl.normal_mode_propagator(system, t) @ mean0)[0])
        else:
            exact = float("nan")
        rows.append([t, mean_q, exact, fld.meta["escape_fraction"]])
    results["displaced_mean"] = [{"time": r[0], "mean_q": r[1], "normal_mode": r[2],
                                  "escape_fraction": r[3]} for r in rows]
    tables = {"density_bracket.csv": bracket.to_csv(), "density_dpdt.csv": dpdt.to_csv(),
              "density_mean.csv": table(["time", "mean_q", "normal_mode", "escape_fraction"], rows)}
    return PipelineResult(results, tables, {"bracket_fraction_within": fb,
                                            "dpdt_fraction_within": fd})


# ---------------------------------------------------------------------------
# quantum
# ---------------------------------------------------------------------------

def _factorized_instance(rng, dS, dE, beta):
    # Sigma_S conditioning grows like exp(beta * spectral width of H_S)
    HS, HE = qm.random_hermitian(dS, rng), qm.random_hermitian(dE, rng)
    H = np.kron(HS, np.eye(dE)) + np.kron(np.eye(dS), HE)
    return H, HS, HE


def run_quantum_innerproduct(cfg: dict) -> PipelineResult:
    ph, nu = cfg["physical"], cfg["numerical"]
    rng = np.random.default_rng(cfg["seed"])
    dS, dE, beta = ph["dim_system"], ph["dim_env"], ph["beta"]
    layout = qm.HilbertLayout(dS, dE)

    miracle = []
    for n in range(nu["n_trials"]):
        d = nu["dims"][n % len(nu["dims"])]
        b = ph["trial_betas"][n % len(ph["trial_betas"])]
        H, X = qm.random_hermitian(d, rng), qm.random_hermitian(d, rng)
        miracle.append([n, d, b, ip.miracle_residual(X, H, b)])

    factorized = []
    for n in range(nu["n_trials"]):
        b = ph["factorized_betas"][n % len(ph["factorized_betas"])]
        H, HS, HE = _factorized_instance(rng, dS, dE, b)
        X = qm.random_hermitian(dS, rng)
        dq = ip.drift_term_quantum(X, H, b, layout, h_env=HE)
        factorized.append([n, b, dq.necessary_condition, dq.difference, dq.chain_residual,
                           dq.condition_number])

    quad = []
    for n in range(10):
        d = 2 if n % 2 == 0 else 4
        rho = qm.random_density(d, rng)
        X = qm.random_hermitian(d, rng)
        quad.append([n, d, float(np.abs(ip.sigma_transform(X, rho)
                                          - ip.sigma_quadrature(X, rho, nu["quadrature_points"])).max())])

    # correlated probe
    if dS == 2 and dE == 2:
        HS, HE = 0.5 * PAULI["sigma_z"], 0.5 * PAULI["sigma_z"]
        coupling = np.kron(PAULI["sigma_x"], PAULI["sigma_x"])
    else:
        HS, HE = qm.random_hermitian(dS, rng), qm.random_hermitian(dE, rng)
        coupling = np.kron(qm.random_hermitian(dS, rng), qm.random_hermitian(dE, rng))
        coupling /= np.linalg.norm(coupling, 2)
    H = np.kron(HS, np.eye(dE)) + np.kron(np.eye(dS), HE) + ph["g"] * coupling
    rho = qm.gibbs_state(H, beta)
    P = ip.GrabertProjector.for_gibbs(H, beta, layout)
    X = qm.random_hermitian(layout.dim, rng)
    Y = qm.random_hermitian(layout.dim, rng)
    XS = qm.random_hermitian(dS, rng)
    state = qm.random_density(layout.dim, rng)
    kubo = ip.InnerProductSpec("kubo_averaged", rho)
    grabert = {
        "condition_number": P.condition_number,
        "fixed_point_error": float(np.linalg.norm(P.project(np.kron(XS, np.eye(dE))) - np.kron(XS, np.eye(dE)))),
        "idempotence_error": float(np.linalg.norm(P.project(P.project(X)) - P.project(X))),
        "reduced_state_error": float(np.linalg.norm(qm.partial_trace_env(P.adjoint(state), layout)
                                                    - qm.partial_trace_env(state, layout))),
        "kubo_self_adjointness": abs(ip.inner_product(P.project(X), Y, kubo)
                                     - ip.inner_product(X, P.project(Y), kubo)),
        "sigma_S_roundtrip": float(np.linalg.norm(ip.sigma_S_inverse(ip.sigma_S(XS, rho, layout), rho, layout) - XS)),
    }
    correlated = []
    for name, op in PAULI.items():
        if dS != 2:
            break
        dq = ip.drift_term_quantum(op, H, beta, layout, h_env=HE)
        correlated.append([name, dq.necessary_condition, dq.difference, dq.chain_residual])
    if dS != 2:
        dq = ip.drift_term_quantum(XS, H, beta, layout, h_env=HE)
        correlated.append(["random", dq.necessary_condition, dq.difference, dq.chain_residual])

    results = {
        "miracle": {"max_residual": max(r[3] for r in miracle), "n_trials": len(miracle)},
        "factorized": {"max_necessary_condition": max(r[2] for r in factorized),
                       "max_drift_difference": max(r[3] for r in factorized)},
        "sigma_quadrature_max_deviation": max(r[2] for r in quad),
        "grabert": grabert,
        "correlated": {"g": ph["g"], "beta": beta,
                       "records": [{"observable": r[0], "necessary_condition": r[1],
                                    "drift_difference": r[2], "chain_residual": r[3]}
                                   for r in correlated]},
    }
    tables = {
        "miracle.csv": table(["trial", "dim", "beta", "residual"], miracle),
        "factorized.csv": table(["trial", "beta", "necessary_condition", "drift_difference",
                                 "chain_residual", "sigma_S_condition"], factorized),
        "correlated.csv": table(["observable", "necessary_condition", "drift_difference",
                                 "chain_residual"], correlated),
    }
    headline = {"miracle_max": results["miracle"]["max_residual"],
                "factorized_necessary_max": results["factorized"]["max_necessary_condition"],
                "correlated_necessary": correlated[0][1], "correlated_drift_difference": correlated[0][2]}
    return PipelineResult(results, tables, headline)


def run_appendix_probe(cfg: dict) -> PipelineResult:
    ph, nu = cfg["physical"], cfg["numerical"]
    p = np.array(ph["p"], float)
    X = PAULI[ph["observable"]]
    beta = ph["beta"]
    state = ip.ClassicalClassicalState(p).mixed_with_product(ph["eps"])
    rep = ip.appendix_probe(state, X, beta)
    sweep_state = ip.ClassicalClassicalState(np.array(ph["sweep_p"], float))
    sweep = ip.correlation_sweep(sweep_state, X, beta, sorted(nu["sweep_eps"]))
    res = [r["residual"] for r in sweep]
    monotone = bool(all(b >= a - 1e-15 for a, b in zip(res, res[1:])))
    results = {"probe": rep.to_dict(), "eps": ph["eps"],
               "sweep": {"p": ph["sweep_p"], "rows": sweep, "monotone": monotone,
                         "residual_at_min_eps": res[0]}}
    tables = {
        "probe_pairs.csv": table(["i", "k", "joint_factor", "marginal_factor", "gap", "commutator_element"],
                                 [[r["i"], r["k"], r["joint_factor"], r["marginal_factor"], r["gap"],
                                   r["commutator_element"]] for r in rep.pairs]),
        "probe_sweep.csv": table(["eps", "residual", "max_factor_gap", "quadrature_agreement"],
                                 [[r["eps"], r["residual"], r["max_factor_gap"],
                                   r["quadrature_agreement"]] for r in sweep]),
    }
    headline = {"residual": rep.residual, "max_factor_gap": rep.max_factor_gap,
                "quadrature_agreement": rep.quadrature_agreement, "sweep_monotone": monotone}
    return PipelineResult(results, tables, headline)


INITIAL_STATES = {
    "excited": np.diag([1.0, 0.0]).astype(complex),
    "ground": np.diag([0.0, 1.0]).astype(complex),
    "plus": 0.5 * np.ones((2, 2), complex),
    "mixed": 0.5 * np.eye(2, dtype=complex),
}


def tcl_model(cfg: dict):
    """Qubit ``(omega/2) sigma_z`` coupled by ``g sigma_x (x) B`` to a random environment."""
    ph = cfg["physical"]
    rng = np.random.default_rng(cfg["seed"])
    dE = ph["dim_env"]
    HS = 0.5 * ph["omega"] * PAULI["sigma_z"]
    HE = ph["env_scale"] * qm.random_hermitian(dE, rng)
    B = qm.random_hermitian(dE, rng)
    B /= np.linalg.norm(B, 2)
    H = np.kron(HS, np.eye(dE)) + np.kron(np.eye(2), HE) + ph["g"] * np.kron(PAULI["sigma_x"], B)
    return qm.HilbertLayout(2, dE), H, HS, HE


def run_tcl_split(cfg: dict) -> PipelineResult:
    ph, nu = cfg["physical"], cfg["numerical"]
    beta = ph["beta"]
    rng = np.random.default_rng(cfg["seed"] + 1)
    layout, H, HS, HE = tcl_model(cfg)
    env_state = qm.gibbs_state(HE, beta)
    times = np.linspace(0.0, nu["t_max"], nu["n_steps"] + 1)
    dyn = tcl.ReducedDynamics(H, env_state, layout)
    series = dyn.series(times)
    gens = tcl.tcl_generator(series, nu["delta"])
    rho0 = INITIAL_STATES[ph["initial_state"]]
    states = series.apply(rho0)
    hmf, info = qm.hamiltonian_of_mean_force(H, beta, layout, h_env=HE, full_output=True)
    rho_eq = info["reduced_state"]
    t_rk, s_rk = tcl.propagate_tcl(gens, rho0)
    idx = np.searchsorted(times, t_rk)
    rk4_err = float(np.abs(s_rk - states[idx]).max())

    results = {
        "diagnostics": {
            "n_gaps": gens.n_gaps, "gap_times": times[gens.gaps].tolist(),
            "min_singular_value": float(np.min(gens.sigma_min)),
            "choi_min_eigenvalue": float(series.choi_min_eigenvalues().min()),
            "map_trace_error": float(series.trace_preservation_error().max()),
            "generator_hermiticity_error": float(np.nanmax(gens.hermiticity_error)) if gens.n_gaps < len(times) else None,
            "generator_trace_error": float(np.nanmax(gens.trace_error)) if gens.n_gaps < len(times) else None,
            "rk4_error": rk4_err, "rk4_window": float(t_rk[-1]),
        },
        "hmf": ip.encode_array(hmf),
        "splits": {},
    }
    tables = {}
    headline = {"n_gaps": gens.n_gaps, "rk4_error": rk4_err}
    for kind in nu["specs"]:
        if kind == "hilbert_schmidt":
            spec, label = ip.InnerProductSpec("hilbert_schmidt"), kind
        else:
            label = f"{kind}:{nu['weight']}"
            if nu["weight"] == "instantaneous":
                def spec(k, kind=kind):
                    return ip.InnerProductSpec(kind, qm.hermitian(states[k]), nu["alpha"])
            else:
                weight = rho_eq if nu["weight"] == "reduced_equilibrium" else qm.gibbs_state(HS, beta)
                spec = ip.InnerProductSpec(kind, weight, nu["alpha"])
        splits = tcl.split_series(gens, spec, label)
        k_last = max(k for k in range(len(times)) if not gens.gaps[k])
        proj = tcl.CommutatorProjection(layout.dim_system, spec(k_last) if callable(spec) else spec)
        margins = proj.minimality_check(gens.generators[k_last], splits.splits[k_last], rng)
        flux, work = tcl.work_flux(splits, states)
        comp = tcl.compare_heff_hmf(splits, hmf, states, rho_eq, nu["equilibration_tol"])
        dist = np.array([np.nan if x is None else x for x in comp["distance"]])
        results["splits"][kind] = {
            "label": label, "final_work": float(work[-1]),
            "max_abs_flux": float(np.nanmax(np.abs(flux))),
            "max_dissipator_norm": float(np.nanmax(splits.dissipator_norm)),
            "final_distance": float(dist[-1]), "mean_distance": float(np.nanmean(dist)),
            "final_H_eff": ip.encode_array(splits.H_eff[-1]),
            "equilibrated": comp["equilibrated"], "caveat": comp["caveat"],
            "equilibration_distance": comp.get("equilibration_distance"),
            "hmf_identity_component": comp["hmf_identity_component"],
            "max_orthogonality": max(sp.orthogonality for sp in splits.splits if sp is not None),
            "minimality_min_increase": float(margins.min()),
        }
        tables[f"tcl_{kind}.csv"] = tcl.series_csv(splits, flux, work, dist)
        headline[f"{kind}_final_distance"] = float(dist[-1])
        headline[f"{kind}_final_work"] = float(work[-1])
    return PipelineResult(results, tables, headline)


def run_decomposition_identity(cfg: dict) -> PipelineResult:
    ph, nu = cfg["physical"], cfg["numerical"]
    rng = np.random.default_rng(cfg["seed"])
    layout = qm.HilbertLayout(ph["dim_system"], ph["dim_env"])
    rows = []
    for n in range(nu["n_trials"]):
        H = qm.random_hermitian(layout.dim, rng, ph["scale"])
        P = ip.GrabertProjector.for_gibbs(H, ph["beta"], layout).superop()
        L = qm.heisenberg_superop(H)
        for t in nu["times"]:
            r = tcl.verify_propagator_decomposition(L, P, t, nu["n_checkpoints"])
            rows.append([n, t, max(r.heisenberg_residual), max(r.schroedinger_residual),
                         r.idempotence_error])
    worst = max(max(r[2], r[3]) for r in rows)
    results = {"max_residual": worst, "n_trials": nu["n_trials"], "times": nu["times"]}
    tables = {"decomposition.csv": table(["trial", "t", "heisenberg_residual", "schroedinger_residual",
                                          "idempotence_error"], rows)}
    return PipelineResult(results, tables, {"max_residual": worst})


PIPELINES = {
    "classical_drift": run_classical_drift,
    "relevant_density": run_relevant_density,
    "quantum_innerproduct": run_quantum_innerproduct,
    "appendix_probe": run_appendix_probe,
    "tcl_split": run_tcl_split,
    "decomposition_identity": run_decomposition_identity,
}


def run_pipeline(cfg: dict) -> PipelineResult:
    return PIPELINES[cfg["kind"]](cfg)
