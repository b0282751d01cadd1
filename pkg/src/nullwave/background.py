"""Spherically symmetric exterior backgrounds in double-null gauge.

Conventions used throughout:

    t = u + v,   rho = v - u  (tortoise coordinate r*),
    g = -Omega^2(u,v) du dv + r^2(u,v) dsigma_S2,

with the flat normalization Omega^2 -> 4 and dr_dv -> +1 at large r.  On
Minkowski this makes r = v - u exactly.  On Reissner-Nordstrom the tortoise
relation dr*/dr = 1/D(r), D(r) = 1 - 2M/r + e^2/r^2, is inverted numerically
and the additive constant is fixed by r*(3M) = 3M.

All geometries here are static: r and Omega^2 depend on (u, v) only through
rho = v - u.  Samplers accept floats or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Background",
    "MinkowskiBackground",
    "ReissnerNordstromBackground",
    "minkowski",
    "reissner_nordstrom",
    "SampleRegion",
    "H0Report",
    "verify_h0",
]


class Background:
    """Base class: a static warped product defined by the lapse profile D(r).

    Subclasses provide ``r_of_rho`` and ``D`` with three r-derivatives; every
    (u, v) sampler below follows by the chain rule through rho = v - u:

        dr_dv = D,  dr_du = -D,  Omega^2 = 4 D,
        d2r_dudv = -D'D,         d2r_dvdv = +D'D,
        d3r_dudvdv = -(D''D + D'^2) D,
        dlogomega2_du = -D',     d2logomega2_dudv = -D''D,
        d3logomega2_dudvdv = -(D'''D + D''D') D.
    """

    name = "background"

    # -- profile hooks ---------------------------------------------------
    def r_of_rho(self, rho):
        raise NotImplementedError

    def D(self, r):
        raise NotImplementedError

    def dD(self, r):
        raise NotImplementedError

    def d2D(self, r):
        raise NotImplementedError

    def d3D(self, r):
        raise NotImplementedError

    # -- batched sampler ---------------------------------------------------
    def geometry(self, u, v) -> dict:
        """All samplers at once, inverting the tortoise map a single time.

        Returns a dict with keys r, omega2, dr_dv, dr_du, d2r_dudv, d2r_dvdv,
        d3r_dudvdv, domega2_dv, dlogomega2_du, d2logomega2_dudv,
        d3logomega2_dudvdv.  Prefer this in bulk evaluations: on curved
        backgrounds each individual sampler repeats the Newton inversion.
        """
        r = self.r(u, v)
        D, D1, D2, D3 = self.D(r), self.dD(r), self.d2D(r), self.d3D(r)
        return {
            "r": r,
            "omega2": 4.0 * D,
            "dr_dv": D,
            "dr_du": -D,
            "d2r_dudv": -D1 * D,
            "d2r_dvdv": D1 * D,
            "d3r_dudvdv": -(D2 * D + D1 * D1) * D,
            "domega2_dv": 4.0 * D1 * D,
            "dlogomega2_du": -D1,
            "d2logomega2_dudv": -D2 * D,
            "d3logomega2_dudvdv": -(D3 * D + D2 * D1) * D,
        }

    # -- (u, v) samplers ---------------------------------------------------
    def r(self, u, v):
        return self.r_of_rho(np.asarray(v, dtype=float) - np.asarray(u, dtype=float))

    def omega2(self, u, v):
        return 4.0 * self.D(self.r(u, v))

    def dr_dv(self, u, v):
        return self.D(self.r(u, v))

    def dr_du(self, u, v):
        return -self.D(self.r(u, v))

    def d2r_dudv(self, u, v):
        r = self.r(u, v)
        return -self.dD(r) * self.D(r)

    def d2r_dvdv(self, u, v):
        r = self.r(u, v)
        return self.dD(r) * self.D(r)

    def d3r_dudvdv(self, u, v):
        r = self.r(u, v)
        Dv, D1, D2 = self.D(r), self.dD(r), self.d2D(r)
        return -(D2 * Dv + D1 * D1) * Dv

    def domega2_dv(self, u, v):
        r = self.r(u, v)
        return 4.0 * self.dD(r) * self.D(r)

    def domega2_du(self, u, v):
        return -self.domega2_dv(u, v)

    def dlogomega2_du(self, u, v):
        return -self.dD(self.r(u, v))

    def d2logomega2_dudv(self, u, v):
        r = self.r(u, v)
        return -self.d2D(r) * self.D(r)

    def d3logomega2_dudvdv(self, u, v):
        r = self.r(u, v)
        Dv, D1, D2, D3 = self.D(r), self.dD(r), self.d2D(r), self.d3D(r)
        return -(D3 * Dv + D2 * D1) * Dv


class MinkowskiBackground(Background):
    """Exact flat background: r = v - u, Omega^2 = 4, all curvature terms zero."""

    name = "minkowski"

    def r_of_rho(self, rho):
        return np.asarray(rho, dtype=float)

    def D(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def dD(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    d2D = dD
    d3D = dD


class ReissnerNordstromBackground(Background):
    """Sub-extremal (or extremal) Reissner-Nordstrom exterior, r > r_+.

    D(r) = 1 - 2M/r + e^2/r^2 = (r - r_+)(r - r_-)/r^2.  The closed-form
    tortoise coordinate (used both directly and as the Newton target) is

        r*(r) = r + [r_+^2 ln(r - r_+) - r_-^2 ln(r - r_-)]/(r_+ - r_-) + C,

    degenerating to r + 2M ln(r - M) - M^2/(r - M) + C at extremality and to
    the identity for M = 0.  C is fixed by r*(3M) = 3M.
    """

    name = "rn"

    # Newton iteration floor for r - r_+ : below this the exterior is
    # indistinguishable from the horizon at double precision.
    _X_FLOOR = 1e-280

    def __init__(self, mass: float, charge: float = 0.0):
        if mass < 0:
            raise ValueError(f"mass must be non-negative, got {mass}")
        if abs(charge) > mass:
            raise ValueError(
                f"no exterior for |e| > M (got M={mass}, e={charge})"
            )
        self.mass = float(mass)
        self.charge = float(charge)
        disc = np.sqrt(max(mass * mass - charge * charge, 0.0))
        self.r_plus = mass + disc
        self.r_minus = mass - disc
        self._rstar_offset = 0.0
        if mass > 0:
            self._rstar_offset = 3.0 * mass - self._rstar_raw(3.0 * mass)

    # -- tortoise map ----------------------------------------------------
    def _rstar_raw(self, r):
        return self._rstar_from_x(np.asarray(r, dtype=float) - self.r_plus)

    def _rstar_from_x(self, x):
        """Tortoise coordinate as a function of x = r - r_+.

        Working in x avoids the catastrophic cancellation of r - r_+ near
        the horizon, where the Newton iteration needs full precision.
        """
        x = np.asarray(x, dtype=float)
        if self.mass == 0.0:
            return x
        rp, rm = self.r_plus, self.r_minus
        with np.errstate(divide="ignore", invalid="ignore"):
            if rp > rm:
                return rp + x + (
                    rp * rp * np.log(np.maximum(x, 1e-300))
                    - rm * rm * np.log(np.maximum(rp - rm + x, 1e-300))
                ) / (rp - rm)
            # extremal: double root at r = M
            return rp + x + 2.0 * rp * np.log(np.maximum(x, 1e-300)) - rp * rp / x

    def rstar(self, r):
        """Tortoise coordinate r*(r); rejects r <= r_+."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= self.r_plus):
            raise ValueError(f"r must exceed r_+ = {self.r_plus}")
        return self._rstar_raw(r) + self._rstar_offset

    def r_of_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.mass == 0.0:
            if np.any(rho <= 0.0):
                raise ValueError("evaluation outside the exterior (r <= 0)")
            return rho
        scalar = rho.ndim == 0
        x = self._invert(np.atleast_1d(rho))
        return x[0] if scalar else x.reshape(rho.shape)

    def _invert(self, rho):
        # Safeguarded Newton on y = ln(r - r_+): monotone target, robust both
        # near the horizon (rstar -> -inf) and in the wave zone (rstar ~ r).
        rho = rho.ravel()
        rp = self.r_plus
        y = np.where(rho > rp + 1.0, np.log(np.maximum(rho - rp, 1.0)), 0.0)
        ylo = np.full_like(rho, np.log(self._X_FLOOR))
        yhi = np.log(np.maximum(rho - rp, rp + 1.0) + 10.0 * (rp + 1.0))
        # grow the upper bracket until it encloses the root
        for _ in range(200):
            bad = self._rstar_raw(rp + np.exp(yhi)) + self._rstar_offset < rho
            if not bad.any():
                break
            yhi = np.where(bad, yhi + 1.0, yhi)
        y = np.clip(y, ylo, yhi)
        # the target residual 1e-10 absolute out to rho ~ few 1e3 needs a
        # near-machine relative tolerance; Newton is quadratic so this is cheap
        tol = np.maximum(4e-14 * np.abs(rho), 1e-13)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for _ in range(100):
                x = np.exp(y)
                f = self._rstar_from_x(x) + self._rstar_offset - rho
                ylo = np.where(f < 0, y, ylo)
                yhi = np.where(f > 0, y, yhi)
                if np.all(np.abs(f) <= tol):
                    break
                # d rstar / dy = x / D(r)
                step = -f * self.D(rp + x) / x
                ynew = y + step
                outside = (ynew <= ylo) | (ynew >= yhi) | ~np.isfinite(ynew)
                y = np.where(outside, 0.5 * (ylo + yhi), ynew)
        return rp + np.exp(y)

    # -- lapse profile -----------------------------------------------------
    def D(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 - 2.0 * self.mass / r + self.charge**2 / r**2

    def dD(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.mass / r**2 - 2.0 * self.charge**2 / r**3

    def d2D(self, r):
        r = np.asarray(r, dtype=float)
        return -4.0 * self.mass / r**3 + 6.0 * self.charge**2 / r**4

    def d3D(self, r):
        r = np.asarray(r, dtype=float)
        return 12.0 * self.mass / r**4 - 24.0 * self.charge**2 / r**5


def minkowski() -> MinkowskiBackground:
    """The exact Minkowski background in the convention r = v - u, Omega^2 = 4."""
    return MinkowskiBackground()


def reissner_nordstrom(mass: float, charge: float = 0.0) -> ReissnerNordstromBackground:
    """Reissner-Nordstrom exterior with 0 <= |charge| <= mass."""
    return ReissnerNordstromBackground(mass, charge)


@dataclass(frozen=True)
class SampleRegion:
    """Sampling lattice for assumption checkers: uniform in u, geometric in v.

    The geometric v spacing spreads samples across decades of r, which is what
    the large-r asymptotic clauses care about.
    """

    u_min: float
    u_max: float
    v_min: float
    v_max: float
    nu: int = 16
    nv: int = 64

    def lattice(self):
        u = np.linspace(self.u_min, self.u_max, self.nu)
        v = np.geomspace(self.v_min, self.v_max, self.nv)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        return uu, vv


@dataclass(frozen=True)
class H0Report:
    """Suprema of the r-weighted mild-asymptotic-flatness quantities.

    Each field is sup over the sampled region of the named weighted quantity;
    the geometry passes when every supremum sits below ``ceiling``.  Note the
    checker bounds r|1 - dr_dv| (not r|1 + dr_dv|): with the normalization
    dr_dv = +D -> +1 that is the combination that actually tends to zero.
    """

    sup_r_one_minus_drdv: float
    sup_r_one_plus_drdu: float
    sup_r_omega2_minus_4: float
    sup_r2_domega2_dv: float
    sup_r2_d2r_dvdv: float
    sup_r2_d2r_dudv: float
    sup_r2_d3r_dudvdv: float
    ceiling: float
    passed: bool
    failure: str = ""

    def as_dict(self) -> dict:
        return {
            "r|1-dr_dv|": self.sup_r_one_minus_drdv,
            "r|1+dr_du|": self.sup_r_one_plus_drdu,
            "r|omega2-4|": self.sup_r_omega2_minus_4,
            "r^2|domega2_dv|": self.sup_r2_domega2_dv,
            "r^2|d2r_dvdv|": self.sup_r2_d2r_dvdv,
            "r^2|d2r_dudv|": self.sup_r2_d2r_dudv,
            "r^2|d3r_dudvdv|": self.sup_r2_d3r_dudvdv,
            "ceiling": self.ceiling,
            "passed": self.passed,
            "failure": self.failure,
        }


def verify_h0(bg: Background, region: SampleRegion, ceiling: float = 100.0) -> H0Report:
    """Check the mild asymptotic-flatness conditions on a sample lattice.

    Every first-derivative deviation is weighted by r and every second/third
    derivative by r^2; all suprema must stay below ``ceiling``.  Non-finite
    sampler output fails the report and records the offending point.
    """
    uu, vv = region.lattice()
    r = bg.r(uu, vv)
    if np.any(r <= 0):
        raise ValueError("region leaves the exterior (r <= 0)")

    quantities = {
        "r|1-dr_dv|": r * np.abs(1.0 - bg.dr_dv(uu, vv)),
        "r|1+dr_du|": r * np.abs(1.0 + bg.dr_du(uu, vv)),
        "r|omega2-4|": r * np.abs(bg.omega2(uu, vv) - 4.0),
        "r^2|domega2_dv|": r * r * np.abs(bg.domega2_dv(uu, vv)),
        "r^2|d2r_dvdv|": r * r * np.abs(bg.d2r_dvdv(uu, vv)),
        "r^2|d2r_dudv|": r * r * np.abs(bg.d2r_dudv(uu, vv)),
        "r^2|d3r_dudvdv|": r * r * np.abs(bg.d3r_dudvdv(uu, vv)),
    }
    sups = {}
    failure = ""
    passed = True
    for name, q in quantities.items():
        if not np.all(np.isfinite(q)):
            i, j = np.argwhere(~np.isfinite(q))[0]
            failure = f"{name} non-finite at (u={uu[i, j]:g}, v={vv[i, j]:g})"
            passed = False
            sups[name] = float("inf")
            continue
        sups[name] = float(np.max(q))
        if sups[name] > ceiling:
            passed = False
            if not failure:
                failure = f"{name} = {sups[name]:g} exceeds ceiling {ceiling:g}"
    return H0Report(
        sup_r_one_minus_drdv=sups["r|1-dr_dv|"],
        sup_r_one_plus_drdu=sups["r|1+dr_du|"],
        sup_r_omega2_minus_4=sups["r|omega2-4|"],
        sup_r2_domega2_dv=sups["r^2|domega2_dv|"],
        sup_r2_d2r_dvdv=sups["r^2|d2r_dvdv|"],
        sup_r2_d2r_dudv=sups["r^2|d2r_dudv|"],
        sup_r2_d3r_dudvdv=sups["r^2|d3r_dudvdv|"],
        ceiling=ceiling,
        passed=passed,
        failure=failure,
    )
