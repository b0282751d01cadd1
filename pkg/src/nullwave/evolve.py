"""Characteristic marching of the radiation-field equation, one mode at a time.

Per spherical-harmonic index ell the evolved equation is

    du dv psi = -(Omega^2/4) r^-2 ell(ell+1) psi
                + r^-2 (s0 psi + s1 du psi + sq r dv psi),

with (s0, s1, sq) the combined source coefficients from the potential module.
The integrator is the second-order diamond scheme: the north corner of each
null cell is predicted from the other three corners plus a cell-centered
source evaluation, then corrected once with centered derivatives.  With a
vanishing right-hand side the scheme is exact (d'Alembert).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .background import Background, SampleRegion, verify_h0
from .grid import NullGrid
from .potential import PotentialSet, source_coefficients

__all__ = [
    "InitialData",
    "ModeField",
    "NumericalBlowupError",
    "evolve_mode",
    "march",
    "convergence_order",
    "ConvergenceReport",
]

DATA_FAMILIES = ("gaussian-bump", "compact-polynomial-bump", "zero")


class NumericalBlowupError(RuntimeError):
    """Non-finite value produced during the march; carries the cell location."""

    def __init__(self, u, v, local):
        super().__init__(
            f"non-finite field value at (u={u:g}, v={v:g}); "
            f"local stencil state {local}"
        )
        self.u = u
        self.v = v
        self.local = local


@dataclass(frozen=True)
class InitialData:
    """Characteristic data on the initial outgoing cone u = u0.

    Families: a gaussian bump A exp(-x^2/2), the compactly supported
    polynomial bump A (1 - x^2)^4 on |x| < 1 (identically zero outside, which
    is what makes the flat Huygens check exact), or zero; x = (v - center)/width.
    Ingoing data (the v = v0 cone on short-time rectangles, the inner timelike
    edge on long-time grids) is zero; the data must therefore vanish at the
    corner (u0, v0).
    """

    family: str = "compact-polynomial-bump"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.family not in DATA_FAMILIES:
            raise ValueError(f"unknown data family {self.family!r}")
        if self.family != "zero" and self.width <= 0:
            raise ValueError("width must be positive")

    def outgoing(self, v):
        v = np.asarray(v, dtype=float)
        if self.family == "zero":
            return np.zeros_like(v)
        x = (v - self.center) / self.width
        if self.family == "gaussian-bump":
            return self.amplitude * np.exp(-0.5 * x * x)
        out = np.zeros_like(v)
        inside = np.abs(x) < 1.0
        out[inside] = self.amplitude * (1.0 - x[inside] ** 2) ** 4
        return out

    def outgoing_dv(self, v):
        v = np.asarray(v, dtype=float)
        if self.family == "zero":
            return np.zeros_like(v)
        x = (v - self.center) / self.width
        if self.family == "gaussian-bump":
            return -self.amplitude * x * np.exp(-0.5 * x * x) / self.width
        out = np.zeros_like(v)
        inside = np.abs(x) < 1.0
        out[inside] = -8.0 * self.amplitude * x[inside] * (1.0 - x[inside] ** 2) ** 3 / self.width
        return out

    def support_end(self) -> float:
        """Largest v with possibly non-zero data (inf for the gaussian)."""
        if self.family == "zero":
            return -np.inf
        if self.family == "gaussian-bump":
            return np.inf
        return self.center + self.width

    def check_corner(self, v0: float):
        corner = float(np.abs(self.outgoing(v0)))
        tol = 1e-9 * max(1.0, abs(self.amplitude))
        if corner > tol:
            raise ValueError(
                f"data({v0:g}) = {corner:g} conflicts with zero ingoing data "
                "(corner compatibility)"
            )


@njit(cache=True)
def _march_row(prev, new, jfirst, A, B1, Bq, h):
    """Fill new[jfirst..] from prev[] and new[jfirst-1] (diamond cells).

    A, B1, Bq are cell coefficients aligned so index m = j - jfirst refers to
    the cell whose north corner is column j:
        rhs = -A psi_c + B1 du(psi)_c + Bq dv(psi)_c.
    """
    n = prev.shape[0]
    h2 = h * h
    inv2h = 0.5 / h
    for j in range(jfirst, n):
        S = prev[j - 1]
        E = prev[j]
        W = new[j - 1]
        # the grouping E + (W - S) keeps zero-RHS transport bit-exact
        base = E + (W - S)
        m = j - jfirst
        # predictor: one-sided derivatives at the cell center
        rhs = -A[m] * 0.5 * (E + W) + B1[m] * (W - S) / h + Bq[m] * (E - S) / h
        N = base + h2 * rhs
        # single corrector pass with centered values
        psi_c = 0.25 * (S + E + W + N)
        du_c = (W + N - S - E) * inv2h
        dv_c = (E + N - S - W) * inv2h
        new[j] = base + h2 * (-A[m] * psi_c + B1[m] * du_c + Bq[m] * dv_c)


class _CellCoefficients:
    """Per-cell coefficient provider for the march.

    Cell (i, j-1) has its center at the same rho = v - u as its south-west
    corner, so on a static background (and r-only potentials) everything
    lives on the 1-D lattice rho_k = (v0 - u0) + k h; otherwise the potential
    part is evaluated row by row.
    """

    def __init__(self, bg: Background, ps: PotentialSet, grid: NullGrid, ell: int):
        self.bg = bg
        self.ps = ps
        self.grid = grid
        self.theta = float(ell * (ell + 1))
        h, nu, nv = grid.h, grid.nu, grid.nv
        self.klo = -(nu - 1) if grid.is_rectangle else 1
        ks = np.arange(self.klo, nv)
        rho = grid.rho_min + h * ks
        u_ref = grid.u0
        geo = bg.geometry(u_ref, u_ref + rho)
        self._r = geo["r"]
        self._om4 = geo["omega2"] / 4.0
        self._ang = self._om4 * self.theta / self._r**2
        self.static = ps.is_static() or ps.is_zero()
        if self.static:
            s0, s1, sq = source_coefficients(ps, bg, u_ref, u_ref + rho, geo=geo)
            self._A = self._ang - s0 / self._r**2
            self._B1 = s1 / self._r**2
            self._Bq = sq / self._r

    def row(self, i: int, jfirst: int):
        """Coefficient arrays for cells with north corners (i+1, jfirst..nv)."""
        nv = self.grid.nv
        k0 = jfirst - 1 - i
        k1 = nv - 1 - i
        sl = slice(k0 - self.klo, k1 + 1 - self.klo)
        if self.static:
            return self._A[sl], self._B1[sl], self._Bq[sl]
        h = self.grid.h
        u_c = self.grid.u0 + i * h + 0.5 * h
        v_c = self.grid.v0 + h * np.arange(jfirst - 1, nv) + 0.5 * h
        s0, s1, sq = source_coefficients(self.ps, self.bg, u_c, v_c)
        r = self._r[sl]
        return self._ang[sl] - s0 / r**2, s1 / r**2, sq / r

    def inner_edge_advection(self) -> float:
        """max |s1|/r near the inner edge, for the CFL-style sanity warning."""
        if self.static:
            b1 = self._B1[: min(8, len(self._B1))]
            r = self._r[: min(8, len(self._r))]
            return float(np.max(np.abs(b1) * r))
        u = self.grid.u0 + 0.5 * self.grid.h
        v = self.grid.v0 + self.grid.h * (np.arange(min(8, self.grid.nv)) + 0.5)
        _, s1, _ = source_coefficients(self.ps, self.bg, u, v)
        return float(np.max(np.abs(s1) / self.bg.r(u, v)))


def march(
    bg: Background,
    ps: PotentialSet,
    grid: NullGrid,
    data: InitialData,
    ell: int,
    row_consumer=None,
    keep_full: bool = True,
):
    """Run the diamond scheme over the grid's domain.

    ``row_consumer.consume(i, u_i, row)`` is called once per completed node
    row (row 0 included); entries left of the row start are zero.  Returns
    the full (nu+1, nv+1) field when ``keep_full``, else None.
    """
    if ell < 0 or ell != int(ell):
        raise ValueError("ell must be a non-negative integer")
    data.check_corner(grid.v0)
    corner_r = bg.r(grid.u0, grid.v0) if grid.is_rectangle else bg.r(0.0, grid.rho_min)
    if corner_r <= 0:
        raise ValueError(
            f"inner corner radius r = {corner_r:g} <= 0: shrink uF or raise v0"
        )

    nu, nv, h = grid.nu, grid.nv, grid.h
    coeffs = _CellCoefficients(bg, ps, grid, int(ell))
    adv = coeffs.inner_edge_advection()
    if h * adv > 0.5:
        warnings.warn(
            f"h * sup|s1|/r = {h * adv:.3g} > 0.5 at the inner edge; "
            "the first-order term is marginally resolved",
            RuntimeWarning,
        )

    v_nodes = grid.v_nodes()
    row = data.outgoing(v_nodes)
    if not grid.is_rectangle:
        row[: grid.jmin(0)] = 0.0
    full = None
    if keep_full:
        bytes_needed = (nu + 1) * (nv + 1) * 8
        if bytes_needed > 2 * 2**30:
            raise MemoryError(
                f"full storage needs {bytes_needed / 2**30:.1f} GiB; "
                "use the streaming diagnostics runner for grids this large"
            )
        full = np.zeros((nu + 1, nv + 1))
        full[0] = row
    if row_consumer is not None:
        row_consumer.consume(0, grid.u0, row)

    new = np.empty_like(row)
    for i in range(nu):
        jb = grid.jmin(i + 1)
        new[: jb + 1] = 0.0  # inner boundary / ingoing value (zero family)
        A, B1, Bq = coeffs.row(i, jb + 1)
        _march_row(row, new, jb + 1, A, B1, Bq, h)
        if not np.all(np.isfinite(new[jb:])):
            j = jb + int(np.argmin(np.isfinite(new[jb:])))
            u_bad = grid.u0 + (i + 1) * h
            v_bad = grid.v0 + j * h
            local = {
                "S": float(row[j - 1]) if j > 0 else 0.0,
                "E": float(row[j]),
                "W": float(new[j - 1]) if j > 0 else 0.0,
            }
            raise NumericalBlowupError(u_bad, v_bad, local)
        row, new = new, row
        if keep_full:
            full[i + 1] = row
        if row_consumer is not None:
            row_consumer.consume(i + 1, grid.u0 + (i + 1) * h, row)
    return full


@dataclass
class ModeField:
    """One evolved spherical-harmonic mode psi_ell = r phi_ell on the grid."""

    ell: int
    grid: NullGrid
    psi: np.ndarray
    bg: Background
    ps: PotentialSet
    is_solution: bool = True

    @property
    def theta(self) -> float:
        return float(self.ell * (self.ell + 1))

    def jmin(self, i: int) -> int:
        return self.grid.jmin(i)

    def dpsi_dv(self) -> np.ndarray:
        """v-derivative at nodes: centered inside, one-sided at edges."""
        h = self.grid.h
        d = np.zeros_like(self.psi)
        d[:, 1:-1] = (self.psi[:, 2:] - self.psi[:, :-2]) / (2 * h)
        d[:, 0] = (-3 * self.psi[:, 0] + 4 * self.psi[:, 1] - self.psi[:, 2]) / (2 * h)
        d[:, -1] = (3 * self.psi[:, -1] - 4 * self.psi[:, -2] + self.psi[:, -3]) / (2 * h)
        if not self.grid.is_rectangle:
            # one-sided at the inner diagonal edge, zero left of it
            for i in range(self.psi.shape[0]):
                j0 = self.jmin(i)
                if j0 > 0:
                    d[i, :j0] = 0.0
                    if j0 + 2 < self.psi.shape[1]:
                        d[i, j0] = (
                            -3 * self.psi[i, j0] + 4 * self.psi[i, j0 + 1] - self.psi[i, j0 + 2]
                        ) / (2 * h)
        return d

    def dpsi_du(self) -> np.ndarray:
        """u-derivative at nodes: centered inside, one-sided at edges."""
        h = self.grid.h
        d = np.zeros_like(self.psi)
        d[1:-1, :] = (self.psi[2:, :] - self.psi[:-2, :]) / (2 * h)
        d[0, :] = (-3 * self.psi[0, :] + 4 * self.psi[1, :] - self.psi[2, :]) / (2 * h)
        d[-1, :] = (3 * self.psi[-1, :] - 4 * self.psi[-2, :] + self.psi[-3, :]) / (2 * h)
        if not self.grid.is_rectangle:
            # near the diagonal the row below lacks data: one-sided upward
            nu, nvp = self.grid.nu, self.psi.shape[1]
            for i in range(1, nu + 1):
                j0 = self.jmin(i)
                d[i, :j0] = 0.0
                for j in (j0, j0 + 1):
                    if j < nvp and i >= 2:
                        d[i, j] = (
                            3 * self.psi[i, j] - 4 * self.psi[i - 1, j] + self.psi[i - 2, j]
                        ) / (2 * h)
        return d

    def phi(self) -> np.ndarray:
        u = self.grid.u_nodes()[:, None]
        v = self.grid.v_nodes()[None, :]
        r = self.bg.r(u, v)
        out = np.zeros_like(self.psi)
        good = r > 0
        out[good] = self.psi[good] / r[good]
        return out


def evolve_mode(
    bg: Background,
    ps: PotentialSet,
    grid: NullGrid,
    data: InitialData,
    ell: int,
    check_h0: bool = True,
    h0_ceiling: float = 100.0,
) -> ModeField:
    """Evolve one mode with full-grid storage.

    The background is screened against the mild-flatness conditions on a
    coarse sample of the grid's far region first; pass ``check_h0=False`` to
    override (e.g. for deliberately pathological test geometries).
    """
    if check_h0:
        v_lo = max(grid.v0, grid.uF + grid.R)
        region = SampleRegion(grid.u0, grid.uF, v_lo + grid.h, grid.vmax, nu=8, nv=32)
        report = verify_h0(bg, region, ceiling=h0_ceiling)
        if not report.passed:
            raise ValueError(f"background fails the mild-flatness check: {report.failure}")
    psi = march(bg, ps, grid, data, ell, keep_full=True)
    return ModeField(ell=int(ell), grid=grid, psi=psi, bg=bg, ps=ps)


@dataclass(frozen=True)
class ConvergenceReport:
    orders_at_probes: dict
    order_max_norm: float
    order_l2_norm: float
    inconclusive: bool
    note: str = ""


def convergence_order(
    bg: Background,
    ps: PotentialSet,
    grid: NullGrid,
    data: InitialData,
    ell: int,
    probes=None,
) -> ConvergenceReport:
    """Richardson triple-level order estimate on {h, h/2, h/4}.

    Solutions are compared on the coarse lattice; the reported order is
    log2 of the ratio of successive differences.  Machine-epsilon errors
    (exact transport) and non-monotone differences flag the result
    inconclusive instead of reporting a meaningless number.
    """
    fields = []
    for refine in (1, 2, 4):
        g = NullGrid(grid.u0, grid.uF, grid.v0, grid.vmax, grid.h / refine, grid.R)
        fields.append(evolve_mode(bg, ps, g, data, ell, check_h0=False))
    coarse, mid, fine = fields
    s = coarse.psi.shape
    d1 = coarse.psi - mid.psi[::2, ::2]
    d2 = mid.psi[::2, ::2] - fine.psi[::4, ::4]
    if not coarse.grid.is_rectangle:
        # keep clear of the clipped corner where stencils are one-sided
        mask = np.zeros(s, dtype=bool)
        for i in range(s[0]):
            mask[i, coarse.grid.jmin(i) :] = True
        d1 = np.where(mask, d1, 0.0)
        d2 = np.where(mask, d2, 0.0)

    scale = float(np.max(np.abs(coarse.psi))) or 1.0
    e1_max, e2_max = float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))
    e1_l2 = float(np.sqrt(np.mean(d1**2)))
    e2_l2 = float(np.sqrt(np.mean(d2**2)))

    if e1_max < 1e-12 * scale:
        return ConvergenceReport({}, float("nan"), float("nan"), True,
                                 "errors at machine precision (exact scheme)")
    if e2_max >= e1_max:
        return ConvergenceReport({}, float("nan"), float("nan"), True,
                                 "non-monotone errors under refinement")

    orders = {}
    for (pu, pv) in probes or []:
        i, j = coarse.grid.iu(pu), coarse.grid.jv(pv)
        a, b = abs(d1[i, j]), abs(d2[i, j])
        orders[(pu, pv)] = float(np.log2(a / b)) if b > 1e-15 * scale else float("nan")
    return ConvergenceReport(
        orders_at_probes=orders,
        order_max_norm=float(np.log2(e1_max / e2_max)),
        order_l2_norm=float(np.log2(e1_l2 / e2_l2)),
        inconclusive=False,
    )
