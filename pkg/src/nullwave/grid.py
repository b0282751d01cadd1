"""Uniform double-null grids.

The characteristic rectangle [u0, uF] x [v0, vmax] is only evolvable in full
when v0 > uF (otherwise r = v - u would leave the exterior on flat space).
For long-time runs the domain is therefore clipped to the parallelogram
v - u >= v0 - u0, whose inner edge is the timelike curve r = r(v0 - u0); in
index space row i then starts at column i.  The r = R interface curve
v_R(u) = u + R must land on grid nodes, which pins (u0 + R - v0)/h to an
integer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NullGrid"]


def _int_multiple(span: float, h: float, what: str) -> int:
    n = span / h
    n_round = round(n)
    if n_round <= 0 or abs(n - n_round) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"{what} ({span:g}) must be a positive integer multiple of h={h:g}")
    return int(n_round)


@dataclass(frozen=True)
class NullGrid:
    """Coordinate bounds, uniform spacing h = du = dv, and interface radius R."""

    u0: float
    uF: float
    v0: float
    vmax: float
    h: float
    R: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.R < 0:
            raise ValueError("R must be non-negative")
        _int_multiple(self.uF - self.u0, self.h, "uF - u0")
        _int_multiple(self.vmax - self.v0, self.h, "vmax - v0")
        if self.uF + self.R > self.vmax + 1e-9 * self.h:
            raise ValueError(
                f"v_R(uF) = {self.uF + self.R:g} exceeds vmax = {self.vmax:g}: "
                "the foliation corner leaves the grid"
            )
        k = (self.u0 + self.R - self.v0) / self.h
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            raise ValueError(
                "(u0 + R - v0)/h must be an integer so the r = R curve lies on grid nodes"
            )
        if not self.is_rectangle and round(k) < 0:
            raise ValueError(
                "long-time grids need v0 <= u0 + R (the interface must sit inside the domain)"
            )

    # -- shape -------------------------------------------------------------
    @property
    def nu(self) -> int:
        return _int_multiple(self.uF - self.u0, self.h, "uF - u0")

    @property
    def nv(self) -> int:
        return _int_multiple(self.vmax - self.v0, self.h, "vmax - v0")

    @property
    def is_rectangle(self) -> bool:
        """True when the full characteristic rectangle stays left of v = v0."""
        return self.v0 > self.uF

    @property
    def rho_min(self) -> float:
        """Inner depth v0 - u0 of the initial-data corner (tortoise units)."""
        return self.v0 - self.u0

    @property
    def k_interface(self) -> int:
        """Column offset of v_R(u_i) relative to row start index i."""
        return int(round((self.u0 + self.R - self.v0) / self.h))

    def u_nodes(self) -> np.ndarray:
        return self.u0 + self.h * np.arange(self.nu + 1)

    def v_nodes(self) -> np.ndarray:
        return self.v0 + self.h * np.arange(self.nv + 1)

    def jmin(self, i: int) -> int:
        """First valid column of node-row i."""
        return 0 if self.is_rectangle else i

    def j_interface(self, i: int) -> int:
        """Column index of the node (u_i, v_R(u_i)); may be out of range."""
        return i + self.k_interface

    def iu(self, u: float) -> int:
        i = (u - self.u0) / self.h
        j = round(i)
        if abs(i - j) > 1e-6 or j < 0 or j > self.nu:
            raise ValueError(f"u={u:g} is not a grid row")
        return int(j)

    def jv(self, v: float) -> int:
        i = (v - self.v0) / self.h
        j = round(i)
        if abs(i - j) > 1e-6 or j < 0 or j > self.nv:
            raise ValueError(f"v={v:g} is not a grid column")
        return int(j)
