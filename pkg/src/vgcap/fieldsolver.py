"""Electrostatic solve and energy bookkeeping on a RegionMap.

Discretization: cell-centered finite volumes on the uniform grid, with
dielectric permittivity harmonically averaged on cell faces and metal
treated as an equipotential Dirichlet region whose surface sits on the
cell face. The outer boundary is zero-normal-derivative. This scheme is
exact for layered (1D) dielectric stacks, which anchors the closed-form
capacitor oracles.

The linear system is solved directly (sparse LU) on small grids and by
algebraic-multigrid preconditioned conjugate gradients on large ones;
both paths are deterministic for a fixed grid.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.constants import epsilon_0, hbar, pi

from .errors import InvalidSpec, NoConvergence
from .geometry import METAL, OXIDE, SILICON, VACUUM, InterfaceClass, InterfaceSet, RegionMap

# above this unknown count the direct factorization is swapped for AMG-CG
_DIRECT_SOLVE_LIMIT = 400_000
_AMG_MAX_CYCLES = 400


@dataclass(frozen=True)
class ThinLayerSpec:
    """Parasitic surface layer: thickness and relative permittivity."""

    thickness: float = 3.0e-9
    eps_layer: float = 10.0

    def __post_init__(self):
        if not self.thickness > 0:
            raise InvalidSpec(f"layer thickness must be > 0, got {self.thickness}")
        if self.eps_layer < 1:
            raise InvalidSpec(f"layer eps must be >= 1, got {self.eps_layer}")


@dataclass
class FieldSolution:
    """Solved potential, field, and energy density at fixed electrode voltage."""

    potential: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    energy_density: np.ndarray
    applied_voltage: float
    total_energy_per_length: float
    grid_spacing: float
    solver_info: dict = field(default_factory=dict)

    @property
    def e_field(self) -> np.ndarray:
        """Field vectors stacked as (ny, nx, 2) in (x, y) order."""
        return np.stack([self.ex, self.ey], axis=-1)

    @property
    def e_magnitude(self) -> np.ndarray:
        return np.hypot(self.ex, self.ey)


def _assemble(region_map: RegionMap, voltage: float):
    """Build the SPD finite-volume system for the non-metal cells."""
    cells = region_map.cells
    eps = region_map.eps_r
    metal = cells == METAL
    ny, nx = cells.shape

    unknown = ~metal
    index = -np.ones((ny, nx), dtype=np.int64)
    n_unknown = int(unknown.sum())
    index[unknown] = np.arange(n_unknown)

    phi_metal = np.zeros((ny, nx))
    phi_metal[region_map.electrode_ids == 1] = +voltage / 2.0
    phi_metal[region_map.electrode_ids == 2] = -voltage / 2.0

    diag = np.zeros(n_unknown)
    rhs = np.zeros(n_unknown)
    rows, cols, vals = [], [], []

    def couple(sl_a, sl_b):
        """Faces between cell block a and block b (same shapes)."""
        m_a = metal[sl_a]
        m_b = metal[sl_b]
        e_a = eps[sl_a]
        e_b = eps[sl_b]
        i_a = index[sl_a]
        i_b = index[sl_b]

        both = ~m_a & ~m_b
        if both.any():
            w = 2.0 * e_a[both] * e_b[both] / (e_a[both] + e_b[both])
            ia = i_a[both]
            ib = i_b[both]
            np.add.at(diag, ia, w)
            np.add.at(diag, ib, w)
            rows.append(ia)
            cols.append(ib)
            vals.append(-w)
            rows.append(ib)
            cols.append(ia)
            vals.append(-w)

        # metal neighbor: Dirichlet face at half-cell distance
        for m_n, m_c, e_c, i_c, sl_n in ((m_b, ~m_a, e_a, i_a, sl_b), (m_a, ~m_b, e_b, i_b, sl_a)):
            sel = m_n & m_c
            if sel.any():
                w = 2.0 * e_c[sel]
                ic = i_c[sel]
                np.add.at(diag, ic, w)
                np.add.at(rhs, ic, w * phi_metal[sl_n][sel])

    couple((slice(None, -1), slice(None)), (slice(1, None), slice(None)))
    couple((slice(None), slice(None, -1)), (slice(None), slice(1, None)))

    rows.append(np.arange(n_unknown))
    cols.append(np.arange(n_unknown))
    vals.append(diag)
    a_mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    )
    return a_mat, rhs, index, phi_metal, unknown


def _face_gradients(phi, eps, metal, axis, h):
    """Per-cell averaged potential gradient along one axis.

    Face gradients are mapped onto each cell's own material via flux
    continuity (exact for piecewise-uniform dielectrics); a metal face
    contributes its surface value at half-cell distance. Boundary faces
    carry no sample; cells average whatever faces they have.
    """
    if axis == 1:
        a = (slice(None), slice(None, -1))
        b = (slice(None), slice(1, None))
    else:
        a = (slice(None, -1), slice(None))
        b = (slice(1, None), slice(None))

    dphi = (phi[b] - phi[a]) / h
    m_a, m_b = metal[a], metal[b]
    e_a, e_b = eps[a], eps[b]
    harm = 2.0 * e_a * e_b / (e_a + e_b)

    # gradient attributed to the a-side cell at this face
    w_a = np.where(m_b, 2.0, harm / e_a)
    # and to the b-side cell
    w_b = np.where(m_a, 2.0, harm / e_b)

    g_sum = np.zeros_like(phi)
    g_cnt = np.zeros_like(phi)
    valid_a = ~m_a
    valid_b = ~m_b
    ga = np.where(valid_a, dphi * w_a, 0.0)
    gb = np.where(valid_b, dphi * w_b, 0.0)
    g_sum[a] += ga
    g_cnt[a] += valid_a
    g_sum[b] += gb
    g_cnt[b] += valid_b

    g = np.divide(g_sum, g_cnt, out=np.zeros_like(g_sum), where=g_cnt > 0)
    g[metal] = 0.0
    return g


def solve_potential(region_map: RegionMap, voltage: float = 1.0, tol: float = 1.0e-8) -> FieldSolution:
    """Solve div(eps grad phi) = 0 with +-voltage/2 on the two electrodes.

    Raises InvalidMap if the electrode set is incomplete and NoConvergence
    if the iterative path stalls above the requested relative residual.
    """
    if not (0.0 < tol <= 1.0e-4):
        raise InvalidSpec(f"tol must lie in (0, 1e-4], got {tol}")
    region_map.validate()

    a_mat, rhs, index, phi_metal, unknown = _assemble(region_map, voltage)
    n = a_mat.shape[0]

    if n <= _DIRECT_SOLVE_LIMIT:
        lu = spla.splu(a_mat.tocsc())
        x = lu.solve(rhs)
        method = "sparse_lu"
        iterations = 1
    else:
        import pyamg

        ml = pyamg.ruge_stuben_solver(a_mat)
        residuals: list = []
        x = ml.solve(rhs, tol=tol * 1e-2, maxiter=_AMG_MAX_CYCLES, accel="cg", residuals=residuals)
        method = "amg_cg"
        iterations = len(residuals) - 1

    b_norm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(rhs - a_mat @ x)) / b_norm if b_norm > 0 else 0.0
    if residual > tol:
        raise NoConvergence(
            f"solver stalled at relative residual {residual:.3e} (tol {tol:.1e})",
            residual=residual,
        )

    phi = phi_metal.copy()
    phi[unknown] = x

    cells = region_map.cells
    metal = cells == METAL
    eps = region_map.eps_r
    h = region_map.grid_spacing
    ex = -_face_gradients(phi, eps, metal, axis=1, h=h)
    ey = -_face_gradients(phi, eps, metal, axis=0, h=h)

    density = 0.5 * epsilon_0 * eps * (ex**2 + ey**2)
    density[metal] = 0.0
    u_tot = float(density.sum()) * h * h

    return FieldSolution(
        potential=phi,
        ex=ex,
        ey=ey,
        energy_density=density,
        applied_voltage=voltage,
        total_energy_per_length=u_tot,
        grid_spacing=h,
        solver_info={
            "method": method,
            "relative_residual": residual,
            "iterations": iterations,
            "n_unknowns": n,
        },
    )


def capacitance(sol: FieldSolution) -> float:
    """Capacitance per unit finger length, C/L = 2 U / V^2 (F/m)."""
    v = sol.applied_voltage
    if v == 0:
        raise InvalidSpec("capacitance undefined at zero applied voltage")
    return 2.0 * sol.total_energy_per_length / v**2


@dataclass(frozen=True)
class BulkParticipation:
    p_vacuum: float
    p_si: float
    p_sio2: float


def participation(sol: FieldSolution, region_map: RegionMap) -> BulkParticipation:
    """Fractions of total field energy stored in vacuum, silicon, and oxide."""
    u = sol.total_energy_per_length
    h2 = sol.grid_spacing**2
    dens = sol.energy_density
    cells = region_map.cells
    return BulkParticipation(
        p_vacuum=float(dens[cells == VACUUM].sum()) * h2 / u,
        p_si=float(dens[cells == SILICON].sum()) * h2 / u,
        p_sio2=float(dens[cells == OXIDE].sum()) * h2 / u,
    )


@dataclass(frozen=True)
class SurfaceSensitivities:
    s_ma: float
    s_ms: float
    s_sa: float

    def as_dict(self) -> dict:
        return {"s_ma": self.s_ma, "s_ms": self.s_ms, "s_sa": self.s_sa}


def _class_integral(sol: FieldSolution, iface: InterfaceClass, cells_idx: np.ndarray) -> float:
    if len(iface) == 0:
        return 0.0
    iy = cells_idx[:, 0]
    ix = cells_idx[:, 1]
    e2 = sol.ex[iy, ix] ** 2 + sol.ey[iy, ix] ** 2
    return float((0.5 * epsilon_0 * e2 * iface.lengths).sum())


def _class_integral_midpoint(sol: FieldSolution, iface: InterfaceClass) -> float:
    """Face integral using the vector-averaged field at the segment midpoint."""
    if len(iface) == 0:
        return 0.0
    fy, fx = iface.cells_front[:, 0], iface.cells_front[:, 1]
    by, bx = iface.cells_back[:, 0], iface.cells_back[:, 1]
    ex_mid = 0.5 * (sol.ex[fy, fx] + sol.ex[by, bx])
    ey_mid = 0.5 * (sol.ey[fy, fx] + sol.ey[by, bx])
    e2 = ex_mid**2 + ey_mid**2
    return float((0.5 * epsilon_0 * e2 * iface.lengths).sum())


def surface_sensitivity(
    sol: FieldSolution,
    ifaces: InterfaceSet,
    layer: Optional[ThinLayerSpec] = None,
    sa_side: str = "midpoint",
) -> SurfaceSensitivities:
    """Surface sensitivities (1/m) of the three interface classes.

    Metal interfaces (MA, MS) sample the field one grid cell off the
    metal, on the non-metal side, using that material's field. For
    substrate-air faces no metal is involved and the default samples the
    segment midpoint (vector average of the two adjacent cells); sa_side
    may instead pin the sample to the 'vacuum' or 'substrate' cell.

    With layer=None this returns the bare field-weighted surface integral
    (1/U) * sum of eps0 |E|^2 / 2 * segment length, a purely geometric
    quantity. With a ThinLayerSpec the integral is referenced to the
    parasitic layer by dividing by its permittivity: the host field and
    displacement are taken unchanged across the thin layer, so the layer
    stores eps0 |E_host|^2 / 2 per unit volume and the sensitivity is
    defined such that participation = s * eps_layer * thickness. An empty
    interface class measures zero.
    """
    if sa_side not in ("substrate", "vacuum", "midpoint"):
        raise InvalidSpec(f"sa_side must be 'substrate', 'vacuum' or 'midpoint', got {sa_side!r}")
    u = sol.total_energy_per_length
    scale = 1.0 / (u * (layer.eps_layer if layer is not None else 1.0))

    if sa_side == "midpoint":
        sa_integral = _class_integral_midpoint(sol, ifaces.sa)
    else:
        sa_cells = ifaces.sa.cells_back if sa_side == "substrate" else ifaces.sa.cells_front
        sa_integral = _class_integral(sol, ifaces.sa, sa_cells)
    return SurfaceSensitivities(
        s_ma=_class_integral(sol, ifaces.ma, ifaces.ma.cells_front) * scale,
        s_ms=_class_integral(sol, ifaces.ms, ifaces.ms.cells_front) * scale,
        s_sa=sa_integral * scale,
    )


def thin_layer_participation(s: float, layer: ThinLayerSpec) -> float:
    """Energy fraction of a parasitic layer: p = s * eps_layer * thickness."""
    if s < 0:
        raise InvalidSpec(f"sensitivity must be >= 0, got {s}")
    return s * layer.eps_layer * layer.thickness


@dataclass(frozen=True)
class ZeroPointField:
    """Zero-point-normalized field statistics for one circuit mode."""

    v_zpf: float
    e_zpf_max: float
    e_zpf_gap_mean: float
    scale: float  # multiply the solved field by this to get the zpf field

    def field_map(self, sol: FieldSolution) -> np.ndarray:
        return sol.e_magnitude * self.scale


def zero_point_field(
    sol: FieldSolution, region_map: RegionMap, c_total: float, frequency: float
) -> ZeroPointField:
    """Rescale the solved field to the zero-point voltage sqrt(hbar w / 2 C).

    Peak and mean magnitudes are evaluated over the interior gap mask so
    they are insensitive to rasterized metal corners.
    """
    if not c_total > 0:
        raise InvalidSpec(f"c_total must be > 0, got {c_total}")
    if not frequency > 0:
        raise InvalidSpec(f"frequency must be > 0, got {frequency}")
    omega = 2.0 * pi * frequency
    v_zpf = float(np.sqrt(hbar * omega / (2.0 * c_total)))
    scale = v_zpf / sol.applied_voltage
    mag = sol.e_magnitude
    mask = region_map.gap_mask
    if mask.any():
        e_max = float(mag[mask].max()) * scale
        e_mean = float(mag[mask].mean()) * scale
    else:
        e_max = e_mean = 0.0
    return ZeroPointField(v_zpf=v_zpf, e_zpf_max=e_max, e_zpf_gap_mean=e_mean, scale=scale)


@dataclass
class ParticipationReport:
    """Per-region energy fractions, interface sensitivities, and field scales."""

    p_vacuum: float
    p_si: float
    p_sio2: float
    s_ma: float
    s_ms: float
    s_sa: float
    p_ma: float
    p_ms: float
    p_sa: float
    capacitance_per_length: float
    e_max_gap: float
    capacitance_total: Optional[float] = None
    e_zpf_max: Optional[float] = None
    e_zpf_gap_mean: Optional[float] = None
    raw_surface_integrals: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    layer: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "p_vacuum": self.p_vacuum,
            "p_si": self.p_si,
            "p_sio2": self.p_sio2,
            "s_ma_per_m": self.s_ma,
            "s_ms_per_m": self.s_ms,
            "s_sa_per_m": self.s_sa,
            "p_ma": self.p_ma,
            "p_ms": self.p_ms,
            "p_sa": self.p_sa,
            "capacitance_per_length_f_per_m": self.capacitance_per_length,
            "capacitance_total_f": self.capacitance_total,
            "e_max_gap_v_per_m": self.e_max_gap,
            "e_zpf_max_v_per_m": self.e_zpf_max,
            "e_zpf_gap_mean_v_per_m": self.e_zpf_gap_mean,
            "raw_surface_integrals_per_m": self.raw_surface_integrals,
            "grid": self.grid,
            "layer": self.layer,
        }
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, **kwargs)


def participation_report(
    region_map: RegionMap,
    sol: FieldSolution,
    ifaces: InterfaceSet,
    layer: ThinLayerSpec = ThinLayerSpec(),
    sa_side: str = "midpoint",
    finger_length: Optional[float] = None,
    frequency: Optional[float] = None,
    c_total: Optional[float] = None,
) -> ParticipationReport:
    """Assemble the full report for one solved geometry.

    capacitance_total uses the supplied effective finger length; the
    zero-point normalization uses c_total directly when given, otherwise
    the derived total capacitance.
    """
    bulk = participation(sol, region_map)
    sens = surface_sensitivity(sol, ifaces, layer=layer, sa_side=sa_side)
    raw = surface_sensitivity(sol, ifaces, layer=None, sa_side=sa_side)
    c_per_len = capacitance(sol)

    c_tot = c_total
    if c_tot is None and finger_length is not None:
        c_tot = c_per_len * finger_length

    mask = region_map.gap_mask
    e_max = float(sol.e_magnitude[mask].max()) if mask.any() else 0.0

    zpf_max = zpf_mean = None
    if frequency is not None and c_tot is not None:
        zpf = zero_point_field(sol, region_map, c_tot, frequency)
        zpf_max = zpf.e_zpf_max
        zpf_mean = zpf.e_zpf_gap_mean

    grid_meta = dict(region_map.meta)
    grid_meta.update(
        {
            "applied_voltage_v": sol.applied_voltage,
            "solver": sol.solver_info,
            "sa_sample_side": sa_side,
            "total_energy_j_per_m": sol.total_energy_per_length,
        }
    )
    return ParticipationReport(
        p_vacuum=bulk.p_vacuum,
        p_si=bulk.p_si,
        p_sio2=bulk.p_sio2,
        s_ma=sens.s_ma,
        s_ms=sens.s_ms,
        s_sa=sens.s_sa,
        p_ma=thin_layer_participation(sens.s_ma, layer),
        p_ms=thin_layer_participation(sens.s_ms, layer),
        p_sa=thin_layer_participation(sens.s_sa, layer),
        capacitance_per_length=c_per_len,
        capacitance_total=c_tot,
        e_max_gap=e_max,
        e_zpf_max=zpf_max,
        e_zpf_gap_mean=zpf_mean,
        raw_surface_integrals=raw.as_dict(),
        grid=grid_meta,
        layer={"thickness_m": layer.thickness, "eps_layer": layer.eps_layer},
    )


_DUMP_MAGIC = b"VGF1"


def write_field_dump(sol: FieldSolution, path) -> None:
    """Write the raw solved grids as a small binary file.

    Layout: magic 'VGF1', int32 nx, int32 ny, float64 grid spacing,
    float64 applied voltage, int32 field count, then row-major float64
    blocks for potential, Ex, Ey, and energy density.
    """
    ny, nx = sol.potential.shape
    blocks = [sol.potential, sol.ex, sol.ey, sol.energy_density]
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<iiddi", nx, ny, sol.grid_spacing, sol.applied_voltage, len(blocks)))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_field_dump(path) -> dict:
    """Read a binary field dump written by write_field_dump."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DUMP_MAGIC:
            raise InvalidSpec(f"not a field dump: bad magic {magic!r}")
        nx, ny, h, v, n_fields = struct.unpack("<iiddi", fh.read(28))
        names = ["potential", "ex", "ey", "energy_density"][:n_fields]
        out = {"nx": nx, "ny": ny, "grid_spacing": h, "applied_voltage": v}
        for name in names:
            data = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(ny, nx)
            out[name] = data
    return out
