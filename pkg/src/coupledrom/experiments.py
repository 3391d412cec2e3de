"""Experiment drivers: test-set evaluation, certified bounds for coupled
queries, tolerance sweeps, and the experiment configuration schema."""

from __future__ import annotations

import itertools
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import estimator as est
from .errors import ConfigError
from .fem import apply_dirichlet_lifting
from .pipeline import (
    FomProblem,
    OnlineResult,
    RomArtifacts,
    build_artifacts,
    build_fom,
    fom_coupled_solve,
    online_solve,
    run_training,
)
from .problems import CoupledProblemSpec, problem_from_dict
from .sampling import lhs_sample
from .storage import write_bundle


# ---------------------------------------------------------------------------
# certified bounds for coupled queries


def _slave_constraint_pairs(fom: FomProblem, g: np.ndarray):
    dofs = np.concatenate([fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices])
    values = np.concatenate([fom.slave.dirichlet_values, g])
    return dofs, values


def _homogenized_system(A, f, dofs, values):
    """Eliminated operator plus the lifted right-hand side of the
    zero-boundary part (constrained rows zeroed)."""
    A_bc, f_bc = apply_dirichlet_lifting(A, f, zip(dofs, values))
    f_hom = f_bc.copy()
    f_hom[np.asarray(dofs, dtype=np.int64)] = 0.0
    return A_bc, f_hom


@dataclass
class SigmaCache:
    """Smallest-singular-value cache keyed by operator weights."""

    values: dict = field(default_factory=dict)

    def get(self, key, factory) -> float:
        if key not in self.values:
            self.values[key] = factory()
        return self.values[key]


def steady_query_bound(
    fom: FomProblem,
    artifacts: RomArtifacts,
    mu1,
    mu2,
    online: OnlineResult,
    fom_result,
    sigma_cache: SigmaCache | None = None,
) -> est.ErrorBoundReport:
    """Three-term steady bound, evaluated with the exact interface data from
    the reference solve."""
    cache = sigma_cache or SigmaCache()
    mu1m = fom.master.mu_mapping(mu1)
    mu2m = fom.slave.mu_mapping(mu2)

    A1 = fom.master.assemble_operator(mu1m)
    f1 = fom.master.assemble_load(mu1m)
    A1_bc, f1_hom = _homogenized_system(
        A1, f1, fom.master.dirichlet_dofs, fom.master.dirichlet_values
    )
    g_exact = fom_result.dirichlet
    dofs2, values2 = _slave_constraint_pairs(fom, g_exact)
    A2 = fom.slave.assemble_operator(mu2m)
    f2 = fom.slave.assemble_load(mu2m)
    A2_bc, f2_hom = _homogenized_system(A2, f2, dofs2, values2)

    s1 = cache.get(("master", tuple(fom.master.theta_weights(mu1m))), lambda: est.sigma_min(A1_bc))
    s2 = cache.get(("slave", tuple(fom.slave.theta_weights(mu2m))), lambda: est.sigma_min(A2_bc))

    actual = float(np.linalg.norm(fom_result.slave - online.slave_solution))
    return est.error_bound_steady(
        (A1_bc, f1_hom),
        artifacts.master.basis.V,
        online.master_reduced,
        (A2_bc, f2_hom),
        artifacts.slave.basis.V,
        online.slave_reduced,
        artifacts.reducer,
        dirichlet_data=g_exact,
        sigma1=s1,
        sigma2=s2,
        actual_error=actual,
    )


def unsteady_query_bounds(
    fom: FomProblem,
    artifacts: RomArtifacts,
    mu1,
    mu2,
    online: OnlineResult,
    fom_result,
    sigma_cache: SigmaCache | None = None,
) -> list[est.ErrorBoundReport]:
    """Per-step bounds for an unsteady master coupled to a steady or unsteady
    slave, using the exact interface trajectory from the reference solve."""
    cache = sigma_cache or SigmaCache()
    spec = artifacts.spec
    dt, n_steps = spec.time.dt, spec.time.n_steps
    mu1m = fom.master.mu_mapping(mu1)
    mu2m = fom.slave.mu_mapping(mu2)
    reducer = artifacts.reducer
    V1, V2 = artifacts.master.basis.V, artifacts.slave.basis.V

    # master contribution on the unconstrained block
    free1 = np.setdiff1d(np.arange(fom.master.n_dofs), fom.master.dirichlet_dofs)
    A1 = fom.master.assemble_operator(mu1m).tocsr()
    A1_ff = A1[np.ix_(free1, free1)].tocsc()
    M1_ff = fom.master.mass[np.ix_(free1, free1)].tocsc()
    c1, c3, method = cache.get(
        ("semigroup-master", tuple(fom.master.theta_weights(mu1m))),
        lambda: est.semigroup_constant(M1_ff, A1_ff, dt * n_steps),
    )
    u0_full = fom.master.u0.copy()
    u0_full[fom.master.dirichlet_dofs] = fom.master.dirichlet_values
    e1_0 = float(
        np.linalg.norm(u0_full[free1] - V1[free1] @ online.master_reduced[0])
    )
    r1 = est.residual_unsteady(
        M1_ff,
        A1_ff,
        lambda t: fom.master.assemble_load(mu1m, t)[free1],
        V1[free1],
        online.master_reduced,
        dt,
    )
    r1_norms = np.linalg.norm(r1, axis=1)

    # interpolation term per step on the exact transferred data
    g_traj = fom_result.dirichlet
    sub_norm = float(np.linalg.norm(reducer.deim.Phi[reducer.deim.indices], 2))
    deim_terms = np.array(
        [est.deim_projection_term(reducer.deim.Phi, sub_norm, g) for g in g_traj]
    )

    A2 = fom.slave.assemble_operator(mu2m)
    f2 = lambda t: fom.slave.assemble_load(mu2m, t)
    constants = {
        "master_semigroup_C1": c1,
        "master_c3": c3,
        "master_constant_method": method,
        "transfer_norm_C": reducer.transfer_norm,
        "magic_rows_norm": sub_norm,
    }

    if not fom.slave.spec.unsteady:
        # instantaneous slave: steady residual bound at every step
        dofs2 = np.concatenate(
            [fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices]
        )
        A2_bc = None
        slave_terms = np.empty(n_steps + 1)
        for k in range(n_steps + 1):
            values2 = np.concatenate([fom.slave.dirichlet_values, g_traj[k]])
            A2_bc, f2_hom = _homogenized_system(A2, f2(k * dt), dofs2, values2)
            r2 = est.residual_steady(A2_bc, f2_hom, V2, online.slave_reduced[k])
            s2 = cache.get(
                ("slave", tuple(fom.slave.theta_weights(mu2m))),
                lambda: est.sigma_min(A2_bc),
            )
            slave_terms[k] = np.linalg.norm(r2) / s2
        constants["sigma_min_slave"] = cache.values[
            ("slave", tuple(fom.slave.theta_weights(mu2m)))
        ]
    else:
        # unsteady slave: Gronwall-type bound on the homogenized dynamics;
        # the lifting enters the forcing with its discrete time derivative
        free2 = np.setdiff1d(
            np.arange(fom.slave.n_dofs),
            np.concatenate([fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices]),
        )
        A2_ff = A2.tocsr()[np.ix_(free2, free2)].tocsc()
        M2_ff = fom.slave.mass[np.ix_(free2, free2)].tocsc()
        c2, c3_2, method2 = cache.get(
            ("semigroup-slave", tuple(fom.slave.theta_weights(mu2m))),
            lambda: est.semigroup_constant(M2_ff, A2_ff, dt * n_steps),
        )
        constants.update({"slave_semigroup_C2": c2, "slave_c3": c3_2})
        gamma = fom.slave.interface.dof_indices
        A2_csc = A2.tocsc()
        M2_csc = fom.slave.mass.tocsc()

        def f2_hom_free(k: int) -> np.ndarray:
            lift = np.zeros(fom.slave.n_dofs)
            lift[gamma] = g_traj[k]
            dlift = np.zeros(fom.slave.n_dofs)
            dlift[gamma] = (g_traj[k] - g_traj[k - 1]) / dt if k else 0.0
            out = f2(k * dt) - A2_csc @ lift - M2_csc @ dlift
            return out[free2]

        u2_tilde0 = fom_result.slave[0].copy()
        u2_tilde0[gamma] = 0.0
        e2_0 = float(
            np.linalg.norm(u2_tilde0[free2] - V2[free2] @ online.slave_reduced[0])
        )
        r2 = np.empty((n_steps, len(free2)))
        from .fem import factorized_solver

        m2_solve = factorized_solver(M2_ff)
        V2f = V2[free2]
        for k in range(1, n_steps + 1):
            full = V2f @ online.slave_reduced[k]
            dudt = V2f @ ((online.slave_reduced[k] - online.slave_reduced[k - 1]) / dt)
            r2[k - 1] = m2_solve(f2_hom_free(k) - A2_ff @ full) - dudt
        r2_norms = np.linalg.norm(r2, axis=1)
        integrals2 = est._cumulative_trapezoid(r2_norms, dt)
        slave_terms = c2 * (e2_0 + integrals2)

    actual = np.linalg.norm(fom_result.slave - online.slave_solution, axis=1)
    return est.error_bound_unsteady(
        master_residual_norms=r1_norms,
        master_initial_error=e1_0,
        master_constant=c1,
        slave_term_per_step=slave_terms,
        deim_term_per_step=deim_terms,
        transfer_norm=reducer.transfer_norm,
        dt=dt,
        constants=constants,
        actual_errors=actual,
    )


# ---------------------------------------------------------------------------
# test-set evaluation


def relative_error(fom_slave: np.ndarray, rom_slave: np.ndarray) -> float:
    """Steady: plain relative two-norm; unsteady: time-aggregated ratio."""
    diff = np.linalg.norm(fom_slave - rom_slave)
    return float(diff / np.linalg.norm(fom_slave))


@dataclass
class QueryResult:
    mu1: list
    mu2: list
    abs_error: float
    rel_error: float
    online_s: float
    fom_s: float
    bound: float | None = None
    rel_bound: float | None = None
    bound_valid: bool | None = None
    effectivity: float | None = None
    warnings: list = field(default_factory=list)


def evaluate_test_set(
    artifacts: RomArtifacts,
    fom: FomProblem,
    n_test: int,
    seed: int,
    with_bounds: bool = False,
    sigma_cache: SigmaCache | None = None,
) -> list[QueryResult]:
    """Online queries against the reference path over an LHS test sample."""
    cache = sigma_cache or SigmaCache()
    mu1s = lhs_sample(fom.master.spec.parameters, n_test, seed, "test")
    mu2s = lhs_sample(fom.slave.spec.parameters, n_test, seed + 1, "test")
    rows = []
    for mu1, mu2 in zip(mu1s.points, mu2s.points):
        fres = fom_coupled_solve(fom, mu1, mu2)
        online = online_solve(artifacts, mu1, mu2)
        rel = relative_error(fres.slave, online.slave_solution)
        abs_err = float(np.linalg.norm(fres.slave - online.slave_solution))
        row = QueryResult(
            mu1=np.atleast_1d(mu1).tolist(),
            mu2=np.atleast_1d(mu2).tolist(),
            abs_error=abs_err,
            rel_error=rel,
            online_s=online.diagnostics["online_s"],
            fom_s=fres.timings["total_s"],
            warnings=online.diagnostics["warnings"],
        )
        if with_bounds:
            denom = np.linalg.norm(fres.slave)
            if artifacts.spec.is_unsteady:
                reports = unsteady_query_bounds(
                    fom, artifacts, mu1, mu2, online, fres, cache
                )
                per_step_bounds = np.array([r.total for r in reports])
                per_step_errors = np.array([r.actual_error for r in reports])
                row.bound = float(np.linalg.norm(per_step_bounds))
                row.rel_bound = row.bound / denom
                row.bound_valid = bool(
                    np.all(per_step_bounds >= per_step_errors * (1 - 1e-12))
                )
                nonzero = per_step_errors > 0
                row.effectivity = float(
                    np.median(per_step_bounds[nonzero] / per_step_errors[nonzero])
                ) if np.any(nonzero) else None
            else:
                report = steady_query_bound(
                    fom, artifacts, mu1, mu2, online, fres, cache
                )
                row.bound = report.total
                row.rel_bound = report.total / denom
                row.bound_valid = bool(report.total >= row.abs_error * (1 - 1e-12))
                row.effectivity = report.effectivity
        rows.append(row)
    return rows


def summarize(rows: Sequence[QueryResult]) -> dict:
    out = {
        "n_queries": len(rows),
        "mean_rel_error": float(np.mean([r.rel_error for r in rows])),
        "max_rel_error": float(np.max([r.rel_error for r in rows])),
        "mean_online_s": float(np.mean([r.online_s for r in rows])),
        "mean_fom_s": float(np.mean([r.fom_s for r in rows])),
    }
    bounds = [r.rel_bound for r in rows if r.rel_bound is not None]
    if bounds:
        out["mean_rel_bound"] = float(np.mean(bounds))
        out["bound_valid_fraction"] = float(
            np.mean([1.0 if r.bound_valid else 0.0 for r in rows])
        )
        effs = [r.effectivity for r in rows if r.effectivity is not None]
        out["median_effectivity"] = float(np.median(effs)) if effs else None
    return out


def measure_speedup(
    artifacts: RomArtifacts, fom: FomProblem, mu1, mu2, repeats: int = 3
) -> dict:
    """Median wall-clock of the reference path vs the reduced query
    (expansion excluded from the reduced timing)."""
    fom_times, online_times, expand_times = [], [], []
    for _ in range(repeats):
        t0 = _time.perf_counter()
        fom_coupled_solve(fom, mu1, mu2)
        fom_times.append(_time.perf_counter() - t0)
        res = online_solve(artifacts, mu1, mu2)
        online_times.append(res.diagnostics["online_s"])
        expand_times.append(res.diagnostics["expand_s"])
    fom_s = float(np.median(fom_times))
    online_s = float(np.median(online_times))
    return {
        "fom_s": fom_s,
        "online_s": online_s,
        "expand_s": float(np.median(expand_times)),
        "speedup": fom_s / online_s,
    }


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    problem: CoupledProblemSpec
    n_train: int
    train_seed: int
    tolerances_master: tuple[float, ...]
    tolerances_slave: tuple[float, ...]
    tolerances_interface: tuple[float, ...]
    n_test: int
    test_seed: int
    output_dir: str
    pairing: str = "paired"

    def grid(self) -> list[tuple[float, float, float]]:
        """All (master, slave, interface) tolerance triples."""
        return [
            (m, s, d)
            for m, d, s in itertools.product(
                self.tolerances_master,
                self.tolerances_interface,
                self.tolerances_slave,
            )
        ]


def _tolerance_tuple(raw, where: str) -> tuple[float, ...]:
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    out = []
    for v in values:
        v = float(v)
        if not 0.0 < v < 1.0:
            raise ConfigError(f"tolerance {v} outside (0, 1)", field=where)
        out.append(v)
    return tuple(out)


def config_from_dict(data: Mapping) -> ExperimentConfig:
    if "problem" not in data:
        raise ConfigError("missing required key 'problem'", field="config")
    problem = problem_from_dict(data["problem"])
    training = data.get("training", {})
    testing = data.get("testing", {})
    tols = training.get("tolerances", {})
    if not isinstance(tols, Mapping):
        raise ConfigError("must be a mapping with master/slave/interface", field="training.tolerances")
    for key in ("master", "slave", "interface"):
        if key not in tols:
            raise ConfigError(f"missing tolerance {key!r}", field="training.tolerances")
    n_train = int(training.get("n_train", 0))
    if n_train < 2:
        raise ConfigError("n_train must be >= 2", field="training.n_train")
    pairing = training.get("pairing", "paired")
    if pairing not in ("paired", "tensor"):
        raise ConfigError("pairing must be 'paired' or 'tensor'", field="training.pairing")
    outputs = data.get("outputs", {})
    if "directory" not in outputs:
        raise ConfigError("missing output directory", field="outputs.directory")
    return ExperimentConfig(
        problem=problem,
        n_train=n_train,
        train_seed=int(training.get("seed", 0)),
        tolerances_master=_tolerance_tuple(tols["master"], "training.tolerances.master"),
        tolerances_slave=_tolerance_tuple(tols["slave"], "training.tolerances.slave"),
        tolerances_interface=_tolerance_tuple(
            tols["interface"], "training.tolerances.interface"
        ),
        n_test=int(testing.get("n_test", 5)),
        test_seed=int(testing.get("seed", 10_000)),
        output_dir=str(outputs["directory"]),
        pairing=pairing,
    )


def bundle_dirname(tolerances: tuple[float, float, float]) -> str:
    m, s, d = tolerances
    return f"bundle_m{m:.0e}_s{s:.0e}_d{d:.0e}"


def ensure_directory(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}", field="outputs.directory")
    return path


def run_offline(config: ExperimentConfig, threads: int = 1):
    """Train once, build one bundle per tolerance triple."""
    t0 = _time.perf_counter()
    training = run_training(
        config.problem, config.n_train, config.train_seed, config.pairing, threads=threads
    )
    out_root = ensure_directory(config.output_dir)
    results = []
    for triple in config.grid():
        artifacts = build_artifacts(training, triple)
        bundle_dir = out_root / bundle_dirname(triple)
        timings = dict(artifacts.provenance.get("timings", {}))
        timings["offline_s"] = _time.perf_counter() - t0
        digest = write_bundle(bundle_dir, artifacts, timings=timings)
        results.append((triple, bundle_dir, digest, artifacts))
    return training, results


def run_sweep(config: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Evaluate the test set for every tolerance triple; returns CSV rows."""
    training = run_training(
        config.problem, config.n_train, config.train_seed, config.pairing, threads=threads
    )
    fom = training.fom
    cache = SigmaCache()

    def one(triple):
        artifacts = build_artifacts(training, triple)
        rows = evaluate_test_set(
            artifacts, fom, config.n_test, config.test_seed, with_bounds=True,
            sigma_cache=cache,
        )
        summary = summarize(rows)
        return {
            "eps_master": triple[0],
            "eps_interface": triple[2],
            "eps_slave": triple[1],
            "mean_error": summary["mean_rel_error"],
            "mean_bound": summary.get("mean_rel_bound"),
            "online_s": summary["mean_online_s"],
            "bound_valid_fraction": summary.get("bound_valid_fraction"),
            "basis_sizes": artifacts.basis_sizes,
        }

    grid = config.grid()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, grid))
    return [one(t) for t in grid]
