"""Declarative run configuration: TOML in, validated objects out.

A config is a single TOML file with [background], [potential], [grid],
[data], [diagnostics], [output] tables, a top-level ``modes`` list and an
optional [[fits]] array.  Parsing is lossless: ``to_toml`` emits a canonical
document that parses back to an equal RunConfig.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .background import Background, minkowski, reissner_nordstrom
from .diagnostics import DiagnosticsSpec
from .evolve import DATA_FAMILIES, InitialData
from .grid import NullGrid
from .potential import COEFF_NAMES, PotentialSet

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


@dataclass(frozen=True)
class RunConfig:
    background_kind: str = "minkowski"
    mass: float = 1.0
    charge: float = 0.0
    epsilon: float = 0.0
    coefficients: dict = field(default_factory=dict)  # name -> expression str
    u0: float = 1.0
    uF: float = 401.0
    v0: float = 11.0
    vmax: float = 2001.0
    h: float = 0.05
    R: float = 10.0
    family: str = "compact-polynomial-bump"
    amplitude: float = 1.0
    center: float = 16.0
    width: float = 3.0
    modes: tuple = (0,)
    p_list: tuple = (0.5, 1.0, 2.0)
    u_stride: int = 10
    with_T: bool = True
    extrap_fracs: tuple = (0.5, 0.75, 1.0)
    checks: tuple = ("h0", "h1", "h3", "boundedness")
    storage: str = "stream"
    fits: tuple = ()  # tuples of (quantity, claim, window_lo, window_hi, mode)
    out_dir: str = "out"
    dump_field: bool = False

    # -- object builders -----------------------------------------------------
    def background(self) -> Background:
        if self.background_kind == "minkowski":
            return minkowski()
        if self.background_kind == "rn":
            return reissner_nordstrom(self.mass, self.charge)
        raise ConfigError(f"unknown background kind {self.background_kind!r}")

    def potential(self) -> PotentialSet:
        return PotentialSet.from_strings(self.epsilon, **self.coefficients)

    def grid(self) -> NullGrid:
        return NullGrid(self.u0, self.uF, self.v0, self.vmax, self.h, self.R)

    def data(self) -> InitialData:
        return InitialData(self.family, self.amplitude, self.center, self.width)

    def diagnostics_spec(self) -> DiagnosticsSpec:
        return DiagnosticsSpec(p_list=tuple(self.p_list),
                               u_stride=self.u_stride,
                               with_T=self.with_T,
                               extrap_fracs=tuple(self.extrap_fracs))

    def validate(self) -> "RunConfig":
        if abs(self.epsilon) > 0.5:
            raise ConfigError(
                f"|epsilon| = {abs(self.epsilon):g} > 0.5 leaves the perturbative regime"
            )
        for p in self.p_list:
            if not 0.0 <= p <= 3.5:
                raise ConfigError(f"weight exponent p = {p:g} outside [0, 3.5]")
        if self.family not in DATA_FAMILIES:
            raise ConfigError(f"unknown data family {self.family!r}")
        if self.storage not in ("stream", "full"):
            raise ConfigError(f"storage must be 'stream' or 'full', got {self.storage!r}")
        unknown = set(self.coefficients) - set(COEFF_NAMES)
        if unknown:
            raise ConfigError(f"unknown potential coefficients {sorted(unknown)}")
        for m in self.modes:
            if m < 0 or m != int(m):
                raise ConfigError(f"mode index {m} must be a non-negative integer")
        try:
            self.grid()
            self.potential()
            self.data()
            self.background()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- serialization ------------------------------------------------------
    def to_toml(self) -> str:
        def fmt(x):
            if isinstance(x, bool):
                return "true" if x else "false"
            if isinstance(x, (int, float)):
                return repr(float(x)) if isinstance(x, float) else str(x)
            if isinstance(x, str):
                return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
            if isinstance(x, (list, tuple)):
                return "[" + ", ".join(fmt(v) for v in x) + "]"
            raise TypeError(f"cannot serialize {x!r}")

        lines = ["# nullwave run configuration", "",
                 f"modes = {fmt(list(self.modes))}", ""]
        lines.append("[background]")
        lines.append(f"kind = {fmt(self.background_kind)}")
        if self.background_kind == "rn":
            lines.append(f"mass = {fmt(self.mass)}")
            lines.append(f"charge = {fmt(self.charge)}")
        lines += ["", "[potential]", f"epsilon = {fmt(self.epsilon)}"]
        for name in COEFF_NAMES:
            if name in self.coefficients:
                lines.append(f"{name} = {fmt(self.coefficients[name])}")
        lines += ["", "[grid]"]
        for key in ("u0", "uF", "v0", "vmax", "h", "R"):
            lines.append(f"{key} = {fmt(getattr(self, key))}")
        lines += ["", "[data]",
                  f"family = {fmt(self.family)}",
                  f"amplitude = {fmt(self.amplitude)}",
                  f"center = {fmt(self.center)}",
                  f"width = {fmt(self.width)}",
                  "",
                  "[diagnostics]",
                  f"p_list = {fmt(list(self.p_list))}",
                  f"u_stride = {fmt(self.u_stride)}",
                  f"with_T = {fmt(self.with_T)}",
                  f"extrap_fracs = {fmt(list(self.extrap_fracs))}",
                  f"checks = {fmt(list(self.checks))}",
                  f"storage = {fmt(self.storage)}"]
        for quantity, claim, lo, hi, mode in self.fits:
            lines += ["", "[[fits]]",
                      f"quantity = {fmt(quantity)}",
                      f"claim = {fmt(claim)}",
                      f"window = {fmt([lo, hi])}",
                      f"mode = {fmt(mode)}"]
        lines += ["", "[output]",
                  f"directory = {fmt(self.out_dir)}",
                  f"dump_field = {fmt(self.dump_field)}", ""]
        return "\n".join(lines)


def _get(table: dict, key: str, kind, default, where: str):
    if key not in table:
        if default is None:
            raise ConfigError(f"missing required key {key!r} in [{where}]")
        return default
    val = table[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if kind is bool and isinstance(val, bool):
        return val
    if kind is str and isinstance(val, str):
        return val
    raise ConfigError(f"key {key!r} in [{where}] must be {kind.__name__}")


def parse_config_text(text: str) -> RunConfig:
    """Parse and validate a TOML config document."""
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc

    bg = doc.get("background", {})
    pot = doc.get("potential", {})
    grid = doc.get("grid", {})
    data = doc.get("data", {})
    diag = doc.get("diagnostics", {})
    out = doc.get("output", {})

    coefficients = {k: v for k, v in pot.items() if k != "epsilon"}
    for name, expr in coefficients.items():
        if not isinstance(expr, str):
            raise ConfigError(f"potential coefficient {name!r} must be an expression string")

    fits = []
    for entry in doc.get("fits", []):
        window = entry.get("window")
        if (not isinstance(window, list) or len(window) != 2
                or not all(isinstance(x, (int, float)) for x in window)):
            raise ConfigError("each [[fits]] entry needs window = [lo, hi]")
        fits.append((
            _get(entry, "quantity", str, None, "fits"),
            _get(entry, "claim", str, None, "fits"),
            float(window[0]), float(window[1]),
            _get(entry, "mode", int, 0, "fits"),
        ))

    modes = doc.get("modes", [0])
    if not isinstance(modes, list) or not modes:
        raise ConfigError("modes must be a non-empty list of integers")

    cfg = RunConfig(
        background_kind=_get(bg, "kind", str, "minkowski", "background"),
        mass=_get(bg, "mass", float, 1.0, "background"),
        charge=_get(bg, "charge", float, 0.0, "background"),
        epsilon=_get(pot, "epsilon", float, 0.0, "potential"),
        coefficients=coefficients,
        u0=_get(grid, "u0", float, 1.0, "grid"),
        uF=_get(grid, "uF", float, 401.0, "grid"),
        v0=_get(grid, "v0", float, 11.0, "grid"),
        vmax=_get(grid, "vmax", float, 2001.0, "grid"),
        h=_get(grid, "h", float, 0.05, "grid"),
        R=_get(grid, "R", float, 10.0, "grid"),
        family=_get(data, "family", str, "compact-polynomial-bump", "data"),
        amplitude=_get(data, "amplitude", float, 1.0, "data"),
        center=_get(data, "center", float, 16.0, "data"),
        width=_get(data, "width", float, 3.0, "data"),
        modes=tuple(int(m) for m in modes),
        p_list=tuple(float(p) for p in diag.get("p_list", [0.5, 1.0, 2.0])),
        u_stride=_get(diag, "u_stride", int, 10, "diagnostics"),
        with_T=_get(diag, "with_T", bool, True, "diagnostics"),
        extrap_fracs=tuple(float(f) for f in diag.get("extrap_fracs", [0.5, 0.75, 1.0])),
        checks=tuple(diag.get("checks", ["h0", "h1", "h3", "boundedness"])),
        storage=_get(diag, "storage", str, "stream", "diagnostics"),
        fits=tuple(fits),
        out_dir=_get(out, "directory", str, "out", "output"),
        dump_field=_get(out, "dump_field", bool, False, "output"),
    )
    return cfg.validate()


def parse_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())
