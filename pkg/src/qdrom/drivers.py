"""Time-stepping drivers: full-order model, reduced-order model, snapshots.

Both drivers advance the same multilevel loop per step: update opacities and
emission from the current temperature iterate, obtain closures, solve the
multigroup moment system, average it to grey coefficients, then solve the
coupled grey/material-energy problem for the next temperature iterate.  The
full-order model refreshes closures from a transport sweep every iteration;
the reduced-order model reconstructs them once per step from compressed
data and never touches the transport grid.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .loqd import (
    GreyProblem,
    MultigroupLoqdSolver,
    MultigroupMoments,
    ProblemGeometry,
    compute_grey_coefficients,
    incoming_tables,
)
from .lowrank import SnapshotMatrix
from .materials import FrequencyGrid, MaterialModel, planck_spectrum
from .mesh import SpatialMesh
from .quadrature import build_quadrature
from .transport import BoundarySpec, ClosureRecord, TransportSolver


class DriverError(RuntimeError):
    """Outer/inner iteration failure; carries the change history."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


#: floor applied to the sweep emission source and initial intensity.  At
#: cold-start temperatures the Planck emission of high-frequency groups
#: underflows to exactly zero (its true value can be ~1e-600), which would
#: leave outgoing boundary currents identically zero and the closure ratios
#: undefined.  The floor is ~1e-110 below any physical signal in the
#: supported configurations and keeps intensities representable.
INTENSITY_SEED = 1e-125


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0.0 or self.n_steps < 1:
            raise ValueError("need dt > 0 and n_steps >= 1")

    @property
    def times(self) -> np.ndarray:
        """Time levels t^1 .. t^{N_t} (the recorded steps)."""
        return self.t0 + self.dt * np.arange(1, self.n_steps + 1)


SNAPSHOT_NAMES = ("fxx_c", "fxx_v", "fyy_c", "fyy_h", "fxy_v", "fxy_h", "cb")


def closure_unknowns(nx: int, ny: int, n_groups: int) -> int:
    """Closure degrees of freedom per step: 2 (D_v + D_h + D_c) N_g."""
    d_c = nx * ny
    d_v = (nx + 1) * ny
    d_h = nx * (ny + 1)
    return 2 * (d_v + d_h + d_c) * n_groups


def stack_closure(c: ClosureRecord) -> dict:
    """Flatten a closure record into the seven snapshot vectors.

    Rows are group-major; grids flatten row-major (y outer); boundary
    factors stack sides left, bottom, right, top within each group.
    """
    return {
        "fxx_c": c.fxx_cell.ravel(),
        "fxx_v": c.fxx_vface.ravel(),
        "fyy_c": c.fyy_cell.ravel(),
        "fyy_h": c.fyy_hface.ravel(),
        "fxy_v": c.fxy_vface.ravel(),
        "fxy_h": c.fxy_hface.ravel(),
        "cb": np.concatenate([c.cb_left, c.cb_bottom, c.cb_right, c.cb_top],
                             axis=1).ravel(),
    }


def unstack_closure(vectors: dict, nx: int, ny: int, n_groups: int) -> ClosureRecord:
    """Inverse of stack_closure for one time step."""
    v = {k: np.asarray(vectors[k], dtype=float) for k in SNAPSHOT_NAMES}
    cb = v["cb"].reshape(n_groups, 2 * (nx + ny))
    return ClosureRecord(
        fxx_cell=v["fxx_c"].reshape(n_groups, ny, nx),
        fyy_cell=v["fyy_c"].reshape(n_groups, ny, nx),
        fxx_vface=v["fxx_v"].reshape(n_groups, ny, nx + 1),
        fxy_vface=v["fxy_v"].reshape(n_groups, ny, nx + 1),
        fyy_hface=v["fyy_h"].reshape(n_groups, ny + 1, nx),
        fxy_hface=v["fxy_h"].reshape(n_groups, ny + 1, nx),
        cb_left=cb[:, :ny],
        cb_bottom=cb[:, ny:ny + nx],
        cb_right=cb[:, ny + nx:2 * ny + nx],
        cb_top=cb[:, 2 * ny + nx:],
    )


def snapshot_layout(name: str, config: RunConfig) -> dict:
    grids = {"fxx_c": "cell", "fyy_c": "cell", "fxx_v": "vface", "fxy_v": "vface",
             "fyy_h": "hface", "fxy_h": "hface", "cb": "boundary"}
    return {
        "quantity": name,
        "grid": grids[name],
        "nx": config.nx,
        "ny": config.ny,
        "n_groups": config.n_groups,
        "stacking": "group-major; grids row-major y-outer; boundary sides L,B,R,T",
    }


@dataclass
class Problem:
    """Configuration bound to its solver components."""

    config: RunConfig
    mesh: SpatialMesh
    geom: ProblemGeometry
    grid: FrequencyGrid
    material: MaterialModel
    bc: BoundarySpec
    transport: TransportSolver
    mg_solver: MultigroupLoqdSolver
    e_in: np.ndarray
    f_in: np.ndarray

    @property
    def time(self) -> TimeGrid:
        return TimeGrid(0.0, self.config.dt, self.config.n_steps)


def build_problem(config: RunConfig) -> Problem:
    mesh = SpatialMesh.uniform(config.nx, config.ny, config.dx, config.dy)
    geom = ProblemGeometry.build(mesh)
    grid = FrequencyGrid(np.asarray(config.group_bounds, dtype=float))
    material = MaterialModel(
        heat_capacity=config.heat_capacity,
        opacity_coeff=config.opacity_coeff,
        opacity_exponent=config.opacity_exponent,
        stimulated_correction=config.stimulated_correction,
        light_speed=config.light_speed,
        radiation_constant=config.radiation_constant,
    )
    quad = build_quadrature(config.quadrature)
    sides = []
    for name in ("left", "bottom", "right", "top"):
        T_in = getattr(config, f"boundary_{name}")
        if T_in is None:
            sides.append(np.zeros(grid.n_groups))
        else:
            sides.append(np.asarray(planck_spectrum(
                T_in, grid, radiation_constant=material.radiation_constant,
                light_speed=material.light_speed)))
    bc = BoundarySpec(*sides)
    transport = TransportSolver(mesh, quad, grid, material, bc)
    e_in, f_in = incoming_tables(geom, transport.incoming_moments())
    mg_solver = MultigroupLoqdSolver(geom, grid, material, e_in, f_in)
    return Problem(config, mesh, geom, grid, material, bc, transport,
                   mg_solver, e_in, f_in)


@dataclass
class RunRecord:
    """Per-step grey state, closures and iteration diagnostics."""

    time: TimeGrid
    mode: str
    config_meta: dict
    temperature: np.ndarray    # (n_steps, ny, nx)
    e_cell: np.ndarray         # (n_steps, ny, nx)
    e_vface: np.ndarray
    e_hface: np.ndarray
    f_vface: np.ndarray
    f_hface: np.ndarray
    closures: list = field(default_factory=list)
    iterations: np.ndarray = None
    final_change: np.ndarray = None
    negative_corners: np.ndarray = None
    closure_violations: np.ndarray = None
    positivity_violations: int = 0

    @property
    def n_steps(self) -> int:
        return self.temperature.shape[0]


def _spectral_fields(p: Problem, T: np.ndarray):
    kappa = np.moveaxis(p.material.group_opacity(T, p.grid), -1, 0)
    planck = np.moveaxis(planck_spectrum(
        T, p.grid, radiation_constant=p.material.radiation_constant,
        light_speed=p.material.light_speed), -1, 0)
    return np.ascontiguousarray(kappa), np.ascontiguousarray(planck)


def _advance_step(p: Problem, mg_prev: MultigroupMoments, t_prev: np.ndarray,
                  closure_source, converged, max_iter: int, warm_x):
    """Iterate the multilevel loop for one time step until fixed point."""
    cfg = p.config
    e_prev_tot = mg_prev.e_cell.sum(axis=0)
    T_it = t_prev
    E_it = e_prev_tot
    grey_x = warm_x
    history = []
    for it in range(max_iter):
        kappa, planck = _spectral_fields(p, T_it)
        closure, extra = closure_source(T_it, kappa, planck)
        mg = p.mg_solver.solve(closure, kappa, planck, mg_prev, cfg.dt)
        coeffs = compute_grey_coefficients(mg, kappa, planck, closure, mg_prev,
                                           cfg.dt, p.geom, p.material, p.e_in, p.f_in)
        grey_problem = GreyProblem(p.geom, coeffs, p.material, cfg.dt,
                                   e_prev_tot, t_prev,
                                   newton_tol=cfg.newton_tol,
                                   max_newton=cfg.max_newton)
        if grey_x is None:
            grey_x = np.concatenate([
                e_prev_tot.ravel(),
                mg_prev.e_vface.sum(axis=0).ravel(),
                mg_prev.e_hface.sum(axis=0).ravel(),
            ])
        grey = grey_problem.solve(grey_x)
        grey_x = np.concatenate([grey.e_cell.ravel(), grey.e_vface.ravel(),
                                 grey.e_hface.ravel()])
        change = converged(grey.temperature, T_it, grey.e_cell, E_it)
        history.append(change)
        T_it, E_it = grey.temperature, grey.e_cell
        if change <= 1.0:
            return grey, mg, closure, extra, it + 1, history, grey_x
    raise DriverError(
        f"no convergence in {max_iter} iterations (last change ratio "
        f"{history[-1]:.3e})", history)


def _initial_state(p: Problem):
    cfg = p.config
    T0 = np.full((cfg.ny, cfg.nx), cfg.t_initial)
    _, planck0 = _spectral_fields(p, T0)
    mg0 = MultigroupMoments.equilibrium(planck0, p.geom, p.material.light_speed)
    return T0, mg0


def _empty_record(p: Problem, mode: str) -> RunRecord:
    cfg = p.config
    nt, ny, nx = cfg.n_steps, cfg.ny, cfg.nx
    return RunRecord(
        time=p.time, mode=mode, config_meta=cfg.to_dict(),
        temperature=np.empty((nt, ny, nx)), e_cell=np.empty((nt, ny, nx)),
        e_vface=np.empty((nt, ny, nx + 1)), e_hface=np.empty((nt, ny + 1, nx)),
        f_vface=np.empty((nt, ny, nx + 1)), f_hface=np.empty((nt, ny + 1, nx)),
        iterations=np.zeros(nt, dtype=int), final_change=np.zeros(nt),
        negative_corners=np.zeros(nt, dtype=int),
        closure_violations=np.zeros(nt, dtype=int),
    )


def _store_step(rec: RunRecord, n: int, grey, closure, extra, iters, history):
    rec.temperature[n] = grey.temperature
    rec.e_cell[n] = grey.e_cell
    rec.e_vface[n] = grey.e_vface
    rec.e_hface[n] = grey.e_hface
    rec.f_vface[n] = grey.f_vface
    rec.f_hface[n] = grey.f_hface
    rec.closures.append(closure)
    rec.iterations[n] = iters
    rec.final_change[n] = history[-1]
    rec.negative_corners[n] = extra
    viol = closure.bound_violations()
    rec.closure_violations[n] = viol["tensor"] + viol["boundary_factor"]
    if np.any(grey.temperature <= 0.0) or np.any(grey.e_cell <= 0.0):
        rec.positivity_violations += 1
        warnings.warn(f"nonpositive temperature or energy density at step {n + 1}")


def run_fom(config: RunConfig | Problem, log=None) -> RunRecord:
    """Full-order run: transport-refreshed closures inside every iteration."""
    p = config if isinstance(config, Problem) else build_problem(config)
    cfg = p.config
    T_prev, mg_prev = _initial_state(p)
    I_prev = np.maximum(p.transport.equilibrium_intensity(cfg.t_initial), INTENSITY_SEED)
    rec = _empty_record(p, "fom")
    tol, floor = cfg.outer_tol, cfg.outer_floor

    def converged(T_new, T_old, E_new, E_old):
        rT = np.max(np.abs(T_new - T_old)) / (tol * np.max(np.abs(T_new)) + floor)
        rE = np.max(np.abs(E_new - E_old)) / (tol * np.max(np.abs(E_new)) + floor)
        return max(rT, rE)

    warm_x = None
    for n in range(cfg.n_steps):
        latest = {}

        def fom_closures(T_it, kappa, planck):
            I_new = p.transport.sweep(kappa, np.maximum(planck, INTENSITY_SEED),
                                      I_prev, cfg.dt)
            latest["I"] = I_new
            return p.transport.compute_eddington(I_new), int(np.sum(I_new < 0.0))

        try:
            grey, mg, closure, extra, iters, history, warm_x = _advance_step(
                p, mg_prev, T_prev, fom_closures, converged, cfg.max_outer, warm_x)
        except DriverError as err:
            raise DriverError(f"FOM step {n + 1}: {err}", err.history) from err
        I_prev = latest["I"]
        mg_prev = mg
        T_prev = grey.temperature
        _store_step(rec, n, grey, closure, extra, iters, history)
        if log is not None:
            log(n + 1, iters, history[-1])
    return rec


def run_rom(config: RunConfig | Problem, models: dict, log=None) -> RunRecord:
    """Reduced-order run: closures reconstructed from compressed data."""
    p = config if isinstance(config, Problem) else build_problem(config)
    cfg = p.config
    missing = [k for k in SNAPSHOT_NAMES if k not in models]
    if missing:
        raise ValueError(f"missing closure models: {missing}")
    T_prev, mg_prev = _initial_state(p)
    rec = _empty_record(p, "rom")
    eps1, eps2 = cfg.inner_tol_rel, cfg.inner_tol_abs

    def converged(T_new, T_old, E_new, E_old):
        rT = np.linalg.norm(T_new - T_old) / (eps1 * np.linalg.norm(T_new) + eps2)
        rE = np.linalg.norm(E_new - E_old) / (eps1 * np.linalg.norm(E_new) + eps2)
        return max(rT, rE)

    warm_x = None
    for n in range(cfg.n_steps):
        vectors = {}
        for name in SNAPSHOT_NAMES:
            vec = models[name].reconstruct(n + 1)
            if not np.all(np.isfinite(vec)):
                raise DriverError(f"model '{name}' produced non-finite values at step {n + 1}")
            vectors[name] = vec
        closure = unstack_closure(vectors, cfg.nx, cfg.ny, cfg.n_groups)

        def rom_closures(T_it, kappa, planck):
            return closure, 0

        try:
            grey, mg, closure_out, extra, iters, history, warm_x = _advance_step(
                p, mg_prev, T_prev, rom_closures, converged, cfg.max_inner, warm_x)
        except DriverError as err:
            raise DriverError(f"ROM step {n + 1}: {err}", err.history) from err
        mg_prev = mg
        T_prev = grey.temperature
        _store_step(rec, n, grey, closure_out, extra, iters, history)
        if log is not None:
            log(n + 1, iters, history[-1])
    return rec


def record_snapshots(run: RunRecord) -> dict:
    """Assemble the seven snapshot matrices from a completed run."""
    if len(run.closures) != run.time.n_steps:
        raise ValueError("run record does not hold one closure per step")
    cfg = RunConfig.from_dict(run.config_meta)
    columns = {name: [] for name in SNAPSHOT_NAMES}
    for closure in run.closures:
        vecs = stack_closure(closure)
        for name in SNAPSHOT_NAMES:
            columns[name].append(vecs[name])
    out = {}
    for name in SNAPSHOT_NAMES:
        data = np.stack(columns[name], axis=1)
        out[name] = SnapshotMatrix(name, data, snapshot_layout(name, cfg),
                                   t0=run.time.t0, dt=run.time.dt, uniform=True)
    return out


def playback_models(matrices: dict) -> dict:
    """Identity-playback models for every snapshot matrix (testing aid)."""
    from .lowrank import SnapshotPlayback
    return {name: SnapshotPlayback(matrices[name]) for name in SNAPSHOT_NAMES}
