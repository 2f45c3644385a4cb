"""Low-order moment solvers: multigroup system, grey coefficients, grey Newton.

The multigroup system couples cell-average energy densities, face-average
energy densities and face-normal fluxes per group through the cell energy
balance, half-cell momentum balances closed by the Eddington tensor, and
boundary rows closed by the boundary factors.  The effective grey problem is
the exact group sum of that scheme: spectrum-averaged absorption and
emission opacities, diffusion-like flux coefficients obtained by recasting
each half-cell momentum balance in terms of the face flux, and a lagged
flux term carrying the previous-step group fluxes.  The grey system couples
to the material energy balance and is solved by Newton iteration with the
temperature eliminated cell-by-cell.

All face fluxes use the fixed +x / +y orientation; outward signs come from
the adjacency tables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .materials import FrequencyGrid, MaterialModel
from .mesh import BoundaryFaces, FaceAdjacency, SpatialMesh, build_adjacency, build_boundary
from .transport import ClosureRecord


class SolverError(RuntimeError):
    """Linear or Newton solve failure; carries context for diagnosis."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DegenerateStateError(ValueError):
    """Zero denominator in a spectrum average."""


@dataclass(frozen=True)
class ProblemGeometry:
    """Mesh plus the assembly tables shared by the moment solvers."""

    mesh: SpatialMesh
    vadj: FaceAdjacency
    hadj: FaceAdjacency
    bfaces: BoundaryFaces

    @classmethod
    def build(cls, mesh: SpatialMesh) -> "ProblemGeometry":
        vadj, hadj = build_adjacency(mesh)
        return cls(mesh, vadj, hadj, build_boundary(mesh))

    @property
    def n_cells(self) -> int:
        return self.mesh.n_cells

    @property
    def n_vfaces(self) -> int:
        return self.mesh.n_vfaces

    @property
    def n_hfaces(self) -> int:
        return self.mesh.n_hfaces

    def boundary_face_global(self) -> np.ndarray:
        """Global face index (vfaces first) per boundary face."""
        return np.where(self.bfaces.orient == 0, self.bfaces.face,
                        self.n_vfaces + self.bfaces.face)


@dataclass
class MultigroupMoments:
    """Per-group cell/face energy densities and face fluxes."""

    e_cell: np.ndarray   # (n_g, ny, nx)
    e_vface: np.ndarray  # (n_g, ny, nx+1)
    e_hface: np.ndarray  # (n_g, ny+1, nx)
    f_vface: np.ndarray  # (n_g, ny, nx+1), +x component
    f_hface: np.ndarray  # (n_g, ny+1, nx), +y component

    @classmethod
    def equilibrium(cls, planck: np.ndarray, geom: ProblemGeometry,
                    light_speed: float) -> "MultigroupMoments":
        """Isotropic moments 4*pi*B/c with zero flux, B given per (g, cell)."""
        n_g = planck.shape[0]
        ny, nx = geom.mesh.ny, geom.mesh.nx
        e_c = 4.0 * np.pi * planck / light_speed
        e_v = np.empty((n_g, ny, nx + 1))
        e_v[:, :, 1:-1] = 0.5 * (e_c[:, :, 1:] + e_c[:, :, :-1])
        e_v[:, :, 0] = e_c[:, :, 0]
        e_v[:, :, -1] = e_c[:, :, -1]
        e_h = np.empty((n_g, ny + 1, nx))
        e_h[:, 1:-1, :] = 0.5 * (e_c[:, 1:, :] + e_c[:, :-1, :])
        e_h[:, 0, :] = e_c[:, 0, :]
        e_h[:, -1, :] = e_c[:, -1, :]
        return cls(e_c, e_v, e_h, np.zeros_like(e_v), np.zeros_like(e_h))

    def totals(self):
        return (self.e_cell.sum(axis=0), self.e_vface.sum(axis=0),
                self.e_hface.sum(axis=0), self.f_vface.sum(axis=0),
                self.f_hface.sum(axis=0))


def incoming_tables(geom: ProblemGeometry, moments_by_side: dict) -> tuple[np.ndarray, np.ndarray]:
    """Broadcast per-side incoming (E_in, n.F_in) onto boundary faces.

    moments_by_side maps side name to a pair of (n_g,) arrays, as produced
    by TransportSolver.incoming_moments.
    """
    n_g = next(iter(moments_by_side.values()))[0].shape[0]
    e_in = np.zeros((n_g, geom.bfaces.count))
    f_in = np.zeros((n_g, geom.bfaces.count))
    for side, (e, f) in moments_by_side.items():
        sl = geom.bfaces.side_slice(side)
        e_in[:, sl] = np.asarray(e)[:, None]
        f_in[:, sl] = np.asarray(f)[:, None]
    return e_in, f_in


class MultigroupLoqdSolver:
    """Sparse direct solver for the per-group moment systems."""

    def __init__(self, geom: ProblemGeometry, grid: FrequencyGrid,
                 material: MaterialModel, e_in: np.ndarray, f_in: np.ndarray):
        self.geom = geom
        self.grid = grid
        self.material = material
        self.e_in = e_in  # (n_g, n_bfaces)
        self.f_in = f_in
        self._build_pattern()

    def _build_pattern(self):
        g = self.geom
        nc, nv, nh = g.n_cells, g.n_vfaces, g.n_hfaces
        nf = nv + nh
        self.n_unknowns = nc + 2 * nf
        self.col_ev = nc
        self.col_eh = nc + nv
        self.col_fv = nc + nf
        self.col_fh = nc + nf + nv
        va, ha, bf = g.vadj, g.hadj, g.bfaces
        row_vmom = nc + np.arange(va.face.shape[0])
        row_hmom = nc + va.face.shape[0] + np.arange(ha.face.shape[0])
        row_bc = nc + va.face.shape[0] + ha.face.shape[0] + np.arange(bf.count)
        self.row_vmom, self.row_hmom, self.row_bc = row_vmom, row_hmom, row_bc
        cells = np.arange(nc)
        bf_fcol = np.where(bf.orient == 0, self.col_fv + bf.face, self.col_fh + bf.face)
        bf_ecol = np.where(bf.orient == 0, self.col_ev + bf.face, self.col_eh + bf.face)
        self.rows = np.concatenate([
            cells, va.cell, ha.cell,                                # cell balances
            row_vmom, row_vmom, row_vmom, row_vmom, row_vmom,      # v momentum
            row_hmom, row_hmom, row_hmom, row_hmom, row_hmom,      # h momentum
            row_bc, row_bc,                                        # boundary rows
        ])
        self.cols = np.concatenate([
            cells, self.col_fv + va.face, self.col_fh + ha.face,
            self.col_fv + va.face, self.col_ev + va.face, va.cell,
            self.col_eh + va.cross_plus, self.col_eh + va.cross_minus,
            self.col_fh + ha.face, self.col_eh + ha.face, ha.cell,
            self.col_ev + ha.cross_plus, self.col_ev + ha.cross_minus,
            bf_fcol, bf_ecol,
        ]).astype(np.int64)
        self.rows = self.rows.astype(np.int64)
        # canonical CSC pattern: entry k of the assembly order lands in
        # data[self._csc_perm][k]; no duplicate (row, col) pairs exist.
        # Groups factor together as one block-diagonal matrix.
        shape = (self.n_unknowns, self.n_unknowns)
        proto = sp.csc_matrix(
            (np.arange(self.rows.size, dtype=float), (self.rows, self.cols)), shape=shape)
        if proto.nnz != self.rows.size:
            raise AssertionError("unexpected duplicate entries in the moment system")
        self._csc_perm = proto.data.astype(np.int64)
        n_g = self.grid.n_groups
        nnz, nun = proto.nnz, self.n_unknowns
        self._blk_indices = np.concatenate(
            [proto.indices + g * nun for g in range(n_g)])
        self._blk_indptr = np.concatenate(
            [proto.indptr[:-1] + g * nnz for g in range(n_g)] + [[n_g * nnz]]
        ).astype(proto.indptr.dtype)

    def _group_data(self, gdx: int, closure: ClosureRecord, kappa2: np.ndarray,
                    dt: float) -> np.ndarray:
        g = self.geom
        va, ha = g.vadj, g.hadj
        c = self.material.light_speed
        area = g.mesh.cell_area.ravel()
        kap = kappa2[gdx]
        fxx_v = closure.fxx_vface[gdx].ravel()
        fxx_c = closure.fxx_cell[gdx].ravel()
        fyy_h = closure.fyy_hface[gdx].ravel()
        fyy_c = closure.fyy_cell[gdx].ravel()
        fxy_v = closure.fxy_vface[gdx].ravel()
        fxy_h = closure.fxy_hface[gdx].ravel()
        cb = np.concatenate([closure.cb_left[gdx], closure.cb_bottom[gdx],
                             closure.cb_right[gdx], closure.cb_top[gdx]])
        cdt = c * dt
        return np.concatenate([
            area / dt + c * kap * area,
            va.sign * va.face_len,
            ha.sign * ha.face_len,
            va.half_area * (1.0 / cdt + kap[va.cell]),
            va.sign * c * fxx_v[va.face] * va.face_len,
            -va.sign * c * fxx_c[va.cell] * va.face_len,
            0.5 * c * va.cross_len * fxy_h[va.cross_plus],
            -0.5 * c * va.cross_len * fxy_h[va.cross_minus],
            ha.half_area * (1.0 / cdt + kap[ha.cell]),
            ha.sign * c * fyy_h[ha.face] * ha.face_len,
            -ha.sign * c * fyy_c[ha.cell] * ha.face_len,
            0.5 * c * ha.cross_len * fxy_v[ha.cross_plus],
            -0.5 * c * ha.cross_len * fxy_v[ha.cross_minus],
            g.bfaces.outward_sign.astype(float),
            -c * cb,
        ])

    def _group_rhs(self, gdx: int, closure: ClosureRecord, kappa2, planck2,
                   prev: MultigroupMoments, dt: float) -> np.ndarray:
        g = self.geom
        c = self.material.light_speed
        area = g.mesh.cell_area.ravel()
        rhs = np.zeros(self.n_unknowns)
        rhs[:g.n_cells] = (area / dt) * prev.e_cell[gdx].ravel() \
            + 4.0 * np.pi * kappa2[gdx] * planck2[gdx] * area
        fprev_v = prev.f_vface[gdx].ravel()
        fprev_h = prev.f_hface[gdx].ravel()
        rhs[self.row_vmom] = g.vadj.half_area / (c * dt) * fprev_v[g.vadj.face]
        rhs[self.row_hmom] = g.hadj.half_area / (c * dt) * fprev_h[g.hadj.face]
        cb = np.concatenate([closure.cb_left[gdx], closure.cb_bottom[gdx],
                             closure.cb_right[gdx], closure.cb_top[gdx]])
        rhs[self.row_bc] = -c * cb * self.e_in[gdx] + self.f_in[gdx]
        return rhs

    def solve(self, closure: ClosureRecord, kappa: np.ndarray, planck: np.ndarray,
              prev: MultigroupMoments, dt: float) -> MultigroupMoments:
        """Direct solve of every group system; kappa/planck are (n_g, ny, nx).

        Groups are independent; they are factored together as one
        block-diagonal matrix to amortize the solver overhead.
        """
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        g = self.geom
        n_g = self.grid.n_groups
        ny, nx = g.mesh.ny, g.mesh.nx
        kappa2 = kappa.reshape(n_g, -1)
        planck2 = planck.reshape(n_g, -1)
        out = MultigroupMoments(
            np.empty((n_g, ny, nx)), np.empty((n_g, ny, nx + 1)),
            np.empty((n_g, ny + 1, nx)), np.empty((n_g, ny, nx + 1)),
            np.empty((n_g, ny + 1, nx)),
        )
        nun = self.n_unknowns
        nc, nv = g.n_cells, g.n_vfaces
        data = np.concatenate([self._group_data(gdx, closure, kappa2, dt)[self._csc_perm]
                               for gdx in range(n_g)])
        rhs = np.concatenate([self._group_rhs(gdx, closure, kappa2, planck2, prev, dt)
                              for gdx in range(n_g)])
        mat = sp.csc_matrix((data, self._blk_indices, self._blk_indptr),
                            shape=(n_g * nun, n_g * nun))
        try:
            x_all = splu(mat).solve(rhs)
        except RuntimeError as err:
            raise SolverError(f"multigroup solve failed: {err}") from err
        for gdx in range(n_g):
            x = x_all[gdx * nun:(gdx + 1) * nun]
            if not np.all(np.isfinite(x)):
                raise SolverError(f"multigroup solve returned non-finite values in group {gdx}")
            out.e_cell[gdx] = x[:nc].reshape(ny, nx)
            out.e_vface[gdx] = x[self.col_ev:self.col_ev + nv].reshape(ny, nx + 1)
            out.e_hface[gdx] = x[self.col_eh:self.col_fv].reshape(ny + 1, nx)
            out.f_vface[gdx] = x[self.col_fv:self.col_fh].reshape(ny, nx + 1)
            out.f_hface[gdx] = x[self.col_fh:].reshape(ny + 1, nx)
        return out

    def cell_balance_residual(self, mg: MultigroupMoments, kappa, planck,
                              prev: MultigroupMoments, dt: float) -> float:
        """Scaled residual of the cell energy balance for the given solution."""
        g = self.geom
        c = self.material.light_speed
        area = g.mesh.cell_area
        dxr = g.mesh.dx[None, None, :]
        dyr = g.mesh.dy[None, :, None]
        res = area * (mg.e_cell - prev.e_cell) / dt \
            + (mg.f_vface[:, :, 1:] - mg.f_vface[:, :, :-1]) * dyr \
            + (mg.f_hface[:, 1:, :] - mg.f_hface[:, :-1, :]) * dxr \
            + c * kappa * mg.e_cell * area - 4.0 * np.pi * kappa * planck * area
        scale = np.abs(4.0 * np.pi * kappa * planck * area) \
            + np.abs(c * kappa * mg.e_cell * area) + np.abs(area * mg.e_cell / dt)
        return float(np.max(np.abs(res) / np.maximum(scale, 1e-300)))


# ---------------------------------------------------------------------------
# spectrum-averaged (grey) coefficients
# ---------------------------------------------------------------------------

@dataclass
class FluxCoeffs:
    """Per-adjacency grey flux-expression coefficients and lag term."""

    d_face: np.ndarray   # multiplies E on the face itself
    d_cell: np.ndarray   # multiplies E on the owning cell
    d_plus: np.ndarray   # multiplies E on the + perpendicular face
    d_minus: np.ndarray  # multiplies E on the - perpendicular face
    p: np.ndarray        # lagged previous-flux contribution


@dataclass
class SpectrumAveraged:
    """Grey coefficients for one outer iterate (flattened grids)."""

    kbar_e: np.ndarray        # (n_cells,)
    kbar_b: np.ndarray        # (n_cells,)
    fbar_xx_cell: np.ndarray  # diagnostics: grey Eddington entries
    fbar_yy_cell: np.ndarray
    fbar_xx_vface: np.ndarray
    fbar_xy_vface: np.ndarray
    fbar_yy_hface: np.ndarray
    fbar_xy_hface: np.ndarray
    cbar: np.ndarray          # (n_bfaces,)
    e_in_total: np.ndarray    # (n_bfaces,)
    f_in_total: np.ndarray    # (n_bfaces,)
    kappa_tilde: np.ndarray   # (n_g, n_cells)
    vflux: FluxCoeffs
    hflux: FluxCoeffs


def _weighted_mean(values, weights, what: str) -> np.ndarray:
    den = weights.sum(axis=0)
    if np.any(den == 0.0):
        loc = int(np.argmin(np.abs(den)))
        raise DegenerateStateError(f"zero denominator averaging {what} at index {loc}")
    return (values * weights).sum(axis=0) / den


def compute_grey_coefficients(mg: MultigroupMoments, kappa: np.ndarray,
                              planck: np.ndarray, closure: ClosureRecord,
                              prev: MultigroupMoments, dt: float,
                              geom: ProblemGeometry, material: MaterialModel,
                              e_in: np.ndarray, f_in: np.ndarray) -> SpectrumAveraged:
    """Spectrum averages over the multigroup solution (Algorithm inputs).

    kappa/planck are (n_g, ny, nx); e_in/f_in are the per-group boundary
    tables.  Averaging identities hold by construction; the boundary-factor
    average falls back to the unweighted mean where its denominator is
    smaller than 1e-30 of the local energy density.
    """
    n_g = kappa.shape[0]
    kap2 = kappa.reshape(n_g, -1)
    b2 = planck.reshape(n_g, -1)
    e_c = mg.e_cell.reshape(n_g, -1)
    e_v = mg.e_vface.reshape(n_g, -1)
    e_h = mg.e_hface.reshape(n_g, -1)
    c = material.light_speed

    kbar_e = _weighted_mean(kap2, e_c, "absorption opacity")
    kbar_b = _weighted_mean(kap2, b2, "emission opacity")
    fbar_xx_c = _weighted_mean(closure.fxx_cell.reshape(n_g, -1), e_c, "cell Eddington xx")
    fbar_yy_c = _weighted_mean(closure.fyy_cell.reshape(n_g, -1), e_c, "cell Eddington yy")
    fbar_xx_v = _weighted_mean(closure.fxx_vface.reshape(n_g, -1), e_v, "face Eddington xx")
    fbar_xy_v = _weighted_mean(closure.fxy_vface.reshape(n_g, -1), e_v, "face Eddington xy")
    fbar_yy_h = _weighted_mean(closure.fyy_hface.reshape(n_g, -1), e_h, "face Eddington yy")
    fbar_xy_h = _weighted_mean(closure.fxy_hface.reshape(n_g, -1), e_h, "face Eddington xy")

    # boundary factor average with the 0/0 guard at near-equilibrium walls
    bfg = geom.boundary_face_global()
    e_faces = np.concatenate([e_v, e_h], axis=1)
    e_bf = e_faces[:, bfg]
    cb = np.concatenate([closure.cb_left, closure.cb_bottom,
                         closure.cb_right, closure.cb_top], axis=1)
    diff = e_bf - e_in
    den = diff.sum(axis=0)
    num = (cb * diff).sum(axis=0)
    scale = e_bf.sum(axis=0)
    guarded = np.abs(den) < 1e-30 * scale
    cbar = np.where(guarded, cb.mean(axis=0), num / np.where(guarded, 1.0, den))

    kappa_tilde = kap2 + 1.0 / (c * dt)

    def flux_coeffs(adj, f_face, f_cell, f_plus, f_minus, e_face, e_perp, fprev):
        kt = kappa_tilde[:, adj.cell]                       # (n_g, n_adj)
        ef = e_face[:, adj.face]
        d_face = _weighted_mean(f_face[:, adj.face] / kt, ef, "flux coefficient")
        d_cell = _weighted_mean(f_cell[:, adj.cell] / kt, e_c[:, adj.cell],
                                "flux coefficient")
        d_plus = _weighted_mean(f_plus[:, adj.cross_plus] / kt,
                                e_perp[:, adj.cross_plus], "flux coefficient")
        d_minus = _weighted_mean(f_minus[:, adj.cross_minus] / kt,
                                 e_perp[:, adj.cross_minus], "flux coefficient")
        p = (fprev[:, adj.face] / (1.0 + c * dt * kap2[:, adj.cell])).sum(axis=0)
        return FluxCoeffs(d_face, d_cell, d_plus, d_minus, p)

    fxx_v = closure.fxx_vface.reshape(n_g, -1)
    fxx_c2 = closure.fxx_cell.reshape(n_g, -1)
    fyy_h = closure.fyy_hface.reshape(n_g, -1)
    fyy_c2 = closure.fyy_cell.reshape(n_g, -1)
    fxy_v = closure.fxy_vface.reshape(n_g, -1)
    fxy_h = closure.fxy_hface.reshape(n_g, -1)
    fprev_v = prev.f_vface.reshape(n_g, -1)
    fprev_h = prev.f_hface.reshape(n_g, -1)
    vflux = flux_coeffs(geom.vadj, fxx_v, fxx_c2, fxy_h, fxy_h, e_v, e_h, fprev_v)
    hflux = flux_coeffs(geom.hadj, fyy_h, fyy_c2, fxy_v, fxy_v, e_h, e_v, fprev_h)

    return SpectrumAveraged(
        kbar_e, kbar_b, fbar_xx_c, fbar_yy_c, fbar_xx_v, fbar_xy_v,
        fbar_yy_h, fbar_xy_h, cbar, e_in.sum(axis=0), f_in.sum(axis=0),
        kappa_tilde, vflux, hflux,
    )


def rosseland_averages(mg: MultigroupMoments, kappa: np.ndarray):
    """Flux-weighted opacities and the residual drift vector, per face.

    Face opacities are the mean of the adjacent cell values.  Raises
    DegenerateStateError where the flux magnitude sum vanishes (e.g. exact
    equilibrium), which is why these are computed on demand only.
    """
    n_g = kappa.shape[0]
    kx = np.empty((n_g,) + mg.f_vface.shape[1:])
    kx[:, :, 1:-1] = 0.5 * (kappa[:, :, 1:] + kappa[:, :, :-1])
    kx[:, :, 0] = kappa[:, :, 0]
    kx[:, :, -1] = kappa[:, :, -1]
    ky = np.empty((n_g,) + mg.f_hface.shape[1:])
    ky[:, 1:-1, :] = 0.5 * (kappa[:, 1:, :] + kappa[:, :-1, :])
    ky[:, 0, :] = kappa[:, 0, :]
    ky[:, -1, :] = kappa[:, -1, :]
    ax = np.abs(mg.f_vface)
    ay = np.abs(mg.f_hface)
    if np.any(ax.sum(axis=0) <= 0.0) or np.any(ay.sum(axis=0) <= 0.0):
        raise DegenerateStateError("zero flux magnitude in a Rosseland-type average")
    kr_x = (kx * ax).sum(axis=0) / ax.sum(axis=0)
    kr_y = (ky * ay).sum(axis=0) / ay.sum(axis=0)
    ex = mg.e_vface.sum(axis=0)
    ey = mg.e_hface.sum(axis=0)
    if np.any(ex <= 0.0) or np.any(ey <= 0.0):
        raise DegenerateStateError("zero energy density in the drift average")
    eta_x = ((kx - kr_x[None]) * mg.f_vface).sum(axis=0) / ex
    eta_y = ((ky - kr_y[None]) * mg.f_hface).sum(axis=0) / ey
    return kr_x, kr_y, eta_x, eta_y


# ---------------------------------------------------------------------------
# effective grey problem
# ---------------------------------------------------------------------------

@dataclass
class GreyState:
    """Converged grey unknowns for one time level."""

    temperature: np.ndarray  # (ny, nx)
    e_cell: np.ndarray       # (ny, nx)
    e_vface: np.ndarray      # (ny, nx+1)
    e_hface: np.ndarray      # (ny+1, nx)
    f_vface: np.ndarray      # (ny, nx+1)
    f_hface: np.ndarray      # (ny+1, nx)
    newton_iterations: int = 0
    newton_residual: float = 0.0


class GreyProblem:
    """Grey LOQD + material energy balance with frozen coefficients."""

    def __init__(self, geom: ProblemGeometry, coeffs: SpectrumAveraged,
                 material: MaterialModel, dt: float,
                 e_prev_cell: np.ndarray, t_prev: np.ndarray,
                 newton_tol: float = 1e-13, max_newton: int = 100):
        self.geom = geom
        self.coeffs = coeffs
        self.material = material
        self.dt = dt
        self.e_prev = e_prev_cell.ravel()
        self.t_prev = t_prev.ravel()
        self.newton_tol = newton_tol
        self.max_newton = max_newton
        self._t_cache = None  # warm start across Newton residual evaluations
        self._G_dense = None
        self._assemble_linear()

    # linear operator over x = [E_cell, E_vface, E_hface]
    def _flux_entries(self, adj, fc: FluxCoeffs, col_face0: int, col_perp0: int):
        c = self.material.light_speed
        scale = c / adj.half_area
        cols = np.stack([
            col_face0 + adj.face, adj.cell,
            col_perp0 + adj.cross_plus, col_perp0 + adj.cross_minus,
        ])
        vals = np.stack([
            -scale * adj.sign * fc.d_face * adj.face_len,
            scale * adj.sign * fc.d_cell * adj.face_len,
            -scale * 0.5 * adj.cross_len * fc.d_plus,
            scale * 0.5 * adj.cross_len * fc.d_minus,
        ])
        return cols, vals

    def _assemble_linear(self):
        g = self.geom
        nc, nv, nh = g.n_cells, g.n_vfaces, g.n_hfaces
        self.n_unknowns = nc + nv + nh
        self.col_ev, self.col_eh = nc, nc + nv
        co = self.coeffs
        area = g.mesh.cell_area.ravel()
        c = self.material.light_speed
        rows, cols, vals = [], [], []
        b = np.zeros(self.n_unknowns)

        # cell rows: time + removal diagonal
        cells = np.arange(nc)
        rows.append(cells)
        cols.append(cells)
        vals.append(area / self.dt + c * co.kbar_e * area)
        b[:nc] += (area / self.dt) * self.e_prev

        v_ent = self._flux_entries(g.vadj, co.vflux, self.col_ev, self.col_eh)
        h_ent = self._flux_entries(g.hadj, co.hflux, self.col_eh, self.col_ev)
        for adj, (ecols, evals), fc, face0 in (
            (g.vadj, v_ent, co.vflux, self.col_ev),
            (g.hadj, h_ent, co.hflux, self.col_eh),
        ):
            # divergence contribution sign * ell_f * F_adj(E) in the cell row
            w = adj.sign * adj.face_len
            for k in range(4):
                rows.append(adj.cell)
                cols.append(ecols[k])
                vals.append(w * evals[k])
            np.add.at(b, adj.cell, -w * fc.p)
            # face rows: sum of sign-weighted one-sided expressions
            # (interior: flux continuity; boundary: the single-sided value)
            frow = face0 + adj.face  # face row id offset equals column offset
            for k in range(4):
                rows.append(frow)
                cols.append(ecols[k])
                vals.append(adj.sign * evals[k])
            np.add.at(b, frow, -adj.sign * fc.p)

        # boundary rows: add -c*Cbar*E_f and constants
        bfg = g.boundary_face_global()
        brow = nc + bfg
        rows.append(brow)
        cols.append(nc + bfg)
        vals.append(-c * co.cbar)
        np.add.at(b, brow, -c * co.cbar * co.e_in_total + co.f_in_total)

        self.G = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_unknowns, self.n_unknowns),
        )
        self.b = b
        self._absG = abs(self.G)
        self._emis_coeff = c * self.coeffs.kbar_b * self.material.radiation_constant * area
        self._v_ent, self._h_ent = v_ent, h_ent

    # material energy balance elimination --------------------------------
    def meb_temperature(self, e_cell: np.ndarray):
        """Solve cv (T - T_prev)/dt + c kbar_b a_R T^4 = c kbar_e E per cell."""
        co, mat = self.coeffs, self.material
        lin = mat.heat_capacity / self.dt
        quart = mat.light_speed * co.kbar_b * mat.radiation_constant
        rhs = mat.light_speed * co.kbar_e * e_cell + lin * self.t_prev
        # no positive root exists for rhs <= 0 (transient Newton overshoot);
        # pin those cells near zero and let the outer damping recover
        rhs = np.maximum(rhs, lin * 1e-12)
        if self._t_cache is not None:
            T = self._t_cache.copy()
        else:
            T = np.maximum(self.t_prev, 1e-12)
        for _ in range(100):
            gval = quart * T**4 + lin * T - rhs
            scale = np.abs(quart * T**4) + np.abs(lin * T) + np.abs(rhs) + 1e-300
            if np.max(np.abs(gval) / scale) < 1e-15:
                break
            step = gval / (4.0 * quart * T**3 + lin)
            T_new = T - step
            T = np.where(T_new > 0.0, T_new, 0.5 * T)
        self._t_cache = T
        dTdE = mat.light_speed * co.kbar_e / (4.0 * quart * T**3 + lin)
        return T, dTdE

    def residual(self, x: np.ndarray, T: np.ndarray | None = None):
        """Residual and per-row scale; T defaults to the MEB elimination."""
        if T is None:
            T, _ = self.meb_temperature(x[:self.geom.n_cells])
        emis = np.zeros(self.n_unknowns)
        emis[:self.geom.n_cells] = self._emis_coeff * T**4
        r = self.G @ x - self.b - emis
        scale = self._absG @ np.abs(x) + np.abs(self.b) + np.abs(emis)
        return r, np.maximum(scale, 1e-300)

    def solve(self, x0: np.ndarray | None = None) -> GreyState:
        g = self.geom
        nc = g.n_cells
        if x0 is None:
            x = np.concatenate([
                self.e_prev,
                np.full(g.n_vfaces, np.mean(self.e_prev)),
                np.full(g.n_hfaces, np.mean(self.e_prev)),
            ])
        else:
            x = x0.copy()
        history = []
        for it in range(self.max_newton):
            T, dTdE = self.meb_temperature(x[:nc])
            r, scale = self.residual(x, T)
            rnorm = float(np.max(np.abs(r) / scale))
            history.append(rnorm)
            if rnorm <= self.newton_tol:
                return self._package(x, T, it, rnorm)
            demis = self._emis_coeff * 4.0 * T**3 * dTdE
            try:
                if self.n_unknowns <= 600:
                    if self._G_dense is None:
                        self._G_dense = self.G.toarray()
                    J = self._G_dense.copy()
                    J[np.arange(nc), np.arange(nc)] -= demis
                    dx = np.linalg.solve(J, -r)
                else:
                    J = self.G - sp.diags(
                        np.concatenate([demis, np.zeros(self.n_unknowns - nc)]),
                        format="csc")
                    dx = splu(J).solve(-r)
            except (RuntimeError, np.linalg.LinAlgError) as err:
                raise SolverError(f"grey Newton linear solve failed: {err}", history) from err
            alpha, best = 1.0, None
            for _ in range(40):
                r_try, scale_try = self.residual(x + alpha * dx)
                r_try_norm = float(np.max(np.abs(r_try) / scale_try))
                if r_try_norm < rnorm or best is None:
                    best = (alpha, r_try_norm)
                    if r_try_norm < rnorm:
                        break
                alpha *= 0.5
            x = x + best[0] * dx
        T, _ = self.meb_temperature(x[:nc])
        r, scale = self.residual(x, T)
        rnorm = float(np.max(np.abs(r) / scale))
        if rnorm <= self.newton_tol:
            return self._package(x, T, self.max_newton, rnorm)
        raise SolverError(
            f"grey Newton did not converge in {self.max_newton} iterations "
            f"(residual {rnorm:.3e})", history)

    def flux_values(self, x: np.ndarray):
        """Face fluxes from the one-sided expressions, averaged per face."""
        g = self.geom
        out = []
        for adj, fc, ent, nfaces in (
            (g.vadj, self.coeffs.vflux, self._v_ent, g.n_vfaces),
            (g.hadj, self.coeffs.hflux, self._h_ent, g.n_hfaces),
        ):
            cols, vals = ent
            fvals = fc.p + sum(vals[k] * x[cols[k]] for k in range(4))
            acc = np.zeros(nfaces)
            cnt = np.zeros(nfaces)
            np.add.at(acc, adj.face, fvals)
            np.add.at(cnt, adj.face, 1.0)
            out.append(acc / cnt)
        return out

    def _package(self, x, T, iterations, rnorm) -> GreyState:
        g = self.geom
        ny, nx = g.mesh.ny, g.mesh.nx
        fv, fh = self.flux_values(x)
        return GreyState(
            temperature=T.reshape(ny, nx),
            e_cell=x[:g.n_cells].reshape(ny, nx),
            e_vface=x[self.col_ev:self.col_eh].reshape(ny, nx + 1),
            e_hface=x[self.col_eh:].reshape(ny + 1, nx),
            f_vface=fv.reshape(ny, nx + 1),
            f_hface=fh.reshape(ny + 1, nx),
            newton_iterations=iterations,
            newton_residual=rnorm,
        )


def solve_grey_problem(geom: ProblemGeometry, coeffs: SpectrumAveraged,
                       material: MaterialModel, prev: GreyState, dt: float,
                       newton_tol: float = 1e-13, max_newton: int = 100) -> GreyState:
    """One backward-Euler grey step from the previous grey state."""
    problem = GreyProblem(geom, coeffs, material, dt,
                          prev.e_cell, prev.temperature,
                          newton_tol=newton_tol, max_newton=max_newton)
    x0 = np.concatenate([prev.e_cell.ravel(), prev.e_vface.ravel(), prev.e_hface.ravel()])
    return problem.solve(x0)


def solve_multigroup_loqd(closure: ClosureRecord, T_field: np.ndarray,
                          prev: MultigroupMoments, dt: float,
                          geom: ProblemGeometry, grid: FrequencyGrid,
                          material: MaterialModel, e_in: np.ndarray,
                          f_in: np.ndarray) -> MultigroupMoments:
    """Functional wrapper evaluating opacity/emission from the temperature."""
    from .materials import planck_spectrum
    T = np.asarray(T_field, dtype=float)
    kappa = np.moveaxis(material.group_opacity(T, grid), -1, 0)
    planck = np.moveaxis(planck_spectrum(T, grid,
                                         radiation_constant=material.radiation_constant,
                                         light_speed=material.light_speed), -1, 0)
    solver = MultigroupLoqdSolver(geom, grid, material, e_in, f_in)
    return solver.solve(closure, kappa, planck, prev, dt)
