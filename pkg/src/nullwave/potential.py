"""Scale-critical coefficient functions: parsing, transforms, assumption checks.

The wave equation carries six dimensionless coefficients: w0, w1, q enter
scaled by the small amplitude epsilon, while W0, W1, Q enter unscaled and must
decay at large r.  Users supply them as expression strings over {u, v, r, t}.
This module parses them, evaluates the radiation-field
("checked") combinations used by the solver, and machine-checks the
boundedness/decay assumptions they must obey.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .background import Background, SampleRegion, minkowski

__all__ = [
    "ExpressionError",
    "PotentialExpression",
    "parse_potential",
    "PotentialSet",
    "TildeCoefficients",
    "tilde_transform",
    "source_coefficients",
    "AssumptionReport",
    "ClauseResult",
    "verify_h1",
    "verify_h3",
]

VARIABLES = ("u", "v", "r", "t")
FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
}


class ExpressionError(ValueError):
    """Syntax or name error in a potential expression; carries the position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------
# Precedence levels used both by the parser and the pretty-printer:
#   1: + -      2: * /      3: unary -      4: ^      5: atoms

class Node:
    prec = 5

    def evaluate(self, env):
        raise NotImplementedError

    def free_vars(self) -> frozenset:
        raise NotImplementedError

    def diff(self, var: str) -> "Node":
        raise NotImplementedError

    def pretty(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.pretty()!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash((type(self).__name__, self._key()))


class Const(Node):
    def __init__(self, value: float):
        self.value = float(value)

    def _key(self):
        return (self.value,)

    def evaluate(self, env):
        return self.value

    def free_vars(self):
        return frozenset()

    def diff(self, var):
        return Const(0.0)

    def pretty(self):
        # repr round-trips doubles exactly; integers print bare
        if self.value == int(self.value) and abs(self.value) < 1e16:
            return str(int(self.value))
        return repr(self.value)


class Var(Node):
    def __init__(self, name: str):
        self.name = name

    def _key(self):
        return (self.name,)

    def evaluate(self, env):
        return env[self.name]

    def free_vars(self):
        return frozenset((self.name,))

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def pretty(self):
        return self.name


class Neg(Node):
    prec = 3

    def __init__(self, arg: Node):
        self.arg = arg

    def _key(self):
        return (self.arg,)

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def free_vars(self):
        return self.arg.free_vars()

    def diff(self, var):
        return neg(self.arg.diff(var))

    def pretty(self):
        s = self.arg.pretty()
        if self.arg.prec < self.prec:
            s = f"({s})"
        return f"-{s}"


class Bin(Node):
    _ops = {
        "+": (1, np.add),
        "-": (1, np.subtract),
        "*": (2, np.multiply),
        "/": (2, np.divide),
        "^": (4, np.power),
    }

    def __init__(self, op: str, lhs: Node, rhs: Node):
        self.op = op
        self.prec = self._ops[op][0]
        self.lhs = lhs
        self.rhs = rhs

    def _key(self):
        return (self.op, self.lhs, self.rhs)

    def evaluate(self, env):
        a = self.lhs.evaluate(env)
        b = self.rhs.evaluate(env)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self._ops[self.op][1](a, b)

    def free_vars(self):
        return self.lhs.free_vars() | self.rhs.free_vars()

    def diff(self, var):
        a, b = self.lhs, self.rhs
        da, db = a.diff(var), b.diff(var)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, b), mul(a, db))
        if self.op == "/":
            return div(sub(mul(da, b), mul(a, db)), mul(b, b))
        # power: constant exponent keeps the derivative log-free
        if isinstance(b, Const):
            return mul(mul(b, power(a, Const(b.value - 1.0))), da)
        return mul(self, add(mul(db, Call("log", a)), mul(b, div(da, a))))

    def pretty(self):
        ls = self.lhs.pretty()
        rs = self.rhs.pretty()
        if self.lhs.prec < self.prec:
            ls = f"({ls})"
        # left-associative: parenthesize an equal-precedence right operand
        if self.rhs.prec < self.prec or (
            isinstance(self.rhs, Bin) and self.rhs.prec == self.prec
        ):
            rs = f"({rs})"
        if self.op == "^":
            return f"{ls}^{rs}"
        return f"{ls} {self.op} {rs}"


class Call(Node):
    def __init__(self, fn: str, arg: Node):
        self.fn = fn
        self.arg = arg

    def _key(self):
        return (self.fn, self.arg)

    def evaluate(self, env):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return FUNCTIONS[self.fn](self.arg.evaluate(env))

    def free_vars(self):
        return self.arg.free_vars()

    def diff(self, var):
        a = self.arg
        da = a.diff(var)
        outer = {
            "sin": lambda: Call("cos", a),
            "cos": lambda: neg(Call("sin", a)),
            "exp": lambda: Call("exp", a),
            "log": lambda: div(Const(1.0), a),
            "sqrt": lambda: div(Const(0.5), Call("sqrt", a)),
            "tanh": lambda: sub(Const(1.0), mul(Call("tanh", a), Call("tanh", a))),
        }[self.fn]()
        return mul(outer, da)

    def pretty(self):
        return f"{self.fn}({self.arg.pretty()})"


def _const(node):
    return node.value if isinstance(node, Const) else None


def add(a, b):
    if _const(a) == 0.0:
        return b
    if _const(b) == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Bin("+", a, b)


def sub(a, b):
    if _const(b) == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _const(a) == 0.0:
        return neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if _const(a) == 0.0 or _const(b) == 0.0:
        return Const(0.0)
    if _const(a) == 1.0:
        return b
    if _const(b) == 1.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Bin("*", a, b)


def div(a, b):
    if _const(a) == 0.0:
        return Const(0.0)
    if _const(b) == 1.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Bin("/", a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def power(a, b):
    if _const(b) == 1.0:
        return a
    if _const(b) == 0.0:
        return Const(1.0)
    return Bin("^", a, b)


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser
# ---------------------------------------------------------------------------

class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._scan()
        self.idx = 0

    def _scan(self):
        text = self.text
        i = 0
        n = len(text)
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c in "+-*/^()":
                self.tokens.append((c, c, i))
                i += 1
                continue
            if c.isdigit() or c == ".":
                j = i
                seen_e = False
                while j < n and (
                    text[j].isdigit()
                    or text[j] == "."
                    or (text[j] in "eE" and not seen_e)
                    or (text[j] in "+-" and j > i and text[j - 1] in "eE")
                ):
                    if text[j] in "eE":
                        seen_e = True
                    j += 1
                try:
                    value = float(text[i:j])
                except ValueError:
                    raise ExpressionError(f"bad number {text[i:j]!r}", i) from None
                self.tokens.append(("num", value, i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("name", text[i:j], i))
                i = j
                continue
            raise ExpressionError(f"unexpected character {c!r}", i)
        self.tokens.append(("eof", None, n))

    def peek(self):
        return self.tokens[self.idx]

    def next(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok


class _Parser:
    def __init__(self, text: str):
        self.tz = _Tokenizer(text)

    def parse(self) -> Node:
        node = self._expr()
        kind, _, pos = self.tz.peek()
        if kind != "eof":
            raise ExpressionError("unexpected trailing input", pos)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.tz.peek()[0] in "+-":
            op, _, _ = self.tz.next()
            node = Bin(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.tz.peek()[0] in "*/":
            op, _, _ = self.tz.next()
            node = Bin(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self.tz.peek()[0] == "-":
            self.tz.next()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Node:
        node = self._atom()
        while self.tz.peek()[0] == "^":
            self.tz.next()
            node = Bin("^", node, self._signed_atom())
        return node

    def _signed_atom(self) -> Node:
        if self.tz.peek()[0] == "-":
            self.tz.next()
            return Neg(self._signed_atom())
        return self._atom()

    def _atom(self) -> Node:
        kind, value, pos = self.tz.next()
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self._expr()
            k, _, p = self.tz.next()
            if k != ")":
                raise ExpressionError("expected ')'", p)
            return node
        if kind == "name":
            if self.tz.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {value!r}", pos)
                self.tz.next()
                arg = self._expr()
                k, _, p = self.tz.next()
                if k != ")":
                    raise ExpressionError("expected ')'", p)
                return Call(value, arg)
            if value not in VARIABLES:
                raise ExpressionError(f"unknown identifier {value!r}", pos)
            return Var(value)
        raise ExpressionError("expected a value", pos)


@dataclass(frozen=True)
class PotentialExpression:
    """A parsed coefficient expression over {u, v, r, t}.

    ``pretty`` -> ``parse`` is an exact round trip on the tree; evaluation
    broadcasts over numpy arrays.  ``diff(var)`` is the symbolic partial with
    respect to one of the four symbols (chain rule through r(u, v) and
    t = u + v is applied by the callers that know the background).
    """

    text: str
    root: Node = field(compare=False, repr=False)

    def evaluate(self, *, u=0.0, v=0.0, r=0.0, t=0.0):
        return self.root.evaluate({"u": u, "v": v, "r": r, "t": t})

    def free_vars(self) -> frozenset:
        return self.root.free_vars()

    def pretty(self) -> str:
        return self.root.pretty()

    def diff(self, var: str) -> "PotentialExpression":
        node = self.root.diff(var)
        return PotentialExpression(node.pretty(), node)


def parse_potential(text: str) -> PotentialExpression:
    """Parse an expression string; raises ExpressionError with the position."""
    root = _Parser(text).parse()
    return PotentialExpression(text, root)


# ---------------------------------------------------------------------------
# Potential sets and the radiation-field coefficient transform
# ---------------------------------------------------------------------------

_ZERO = parse_potential("0")
COEFF_NAMES = ("w0", "w1", "q", "W0", "W1", "Q")


@dataclass(frozen=True)
class PotentialSet:
    """The six coefficient functions plus the small amplitude epsilon."""

    epsilon: float
    w0: PotentialExpression = _ZERO
    w1: PotentialExpression = _ZERO
    q: PotentialExpression = _ZERO
    W0: PotentialExpression = _ZERO
    W1: PotentialExpression = _ZERO
    Q: PotentialExpression = _ZERO

    @classmethod
    def from_strings(cls, epsilon: float, **exprs: str) -> "PotentialSet":
        unknown = set(exprs) - set(COEFF_NAMES)
        if unknown:
            raise ValueError(f"unknown coefficient(s): {sorted(unknown)}")
        parsed = {k: parse_potential(v) for k, v in exprs.items()}
        return cls(epsilon=float(epsilon), **parsed)

    def coeff(self, name: str) -> PotentialExpression:
        return getattr(self, name)

    def is_zero(self) -> bool:
        return all(self.coeff(n).root == Const(0.0) for n in COEFF_NAMES)

    def is_static(self) -> bool:
        """True when every coefficient depends on r alone (profile-cacheable)."""
        used = frozenset().union(*(self.coeff(n).free_vars() for n in COEFF_NAMES))
        return used <= {"r"}

    # -- evaluation with the background resolving r and t ------------------
    def eval(self, name: str, u, v, bg: Background, r=None):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if r is None:
            r = bg.r(u, v)
        return np.broadcast_to(
            np.asarray(self.coeff(name).evaluate(u=u, v=v, r=r, t=u + v)),
            np.broadcast_shapes(u.shape, v.shape),
        ).astype(float, copy=False)

    def eval_du(self, name: str, u, v, bg: Background, mode: str = "analytic"):
        """Total u-partial of the coefficient along coordinate lines."""
        if mode == "fd":
            return self._fd(name, u, v, bg, axis="u")
        e = self.coeff(name)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        env = {"u": u, "v": v, "r": bg.r(u, v), "t": u + v}
        return (
            e.root.diff("u").evaluate(env)
            + e.root.diff("r").evaluate(env) * bg.dr_du(u, v)
            + e.root.diff("t").evaluate(env)
        )

    def eval_dv(self, name: str, u, v, bg: Background, mode: str = "analytic"):
        """Total v-partial of the coefficient along coordinate lines."""
        if mode == "fd":
            return self._fd(name, u, v, bg, axis="v")
        e = self.coeff(name)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        env = {"u": u, "v": v, "r": bg.r(u, v), "t": u + v}
        return (
            e.root.diff("v").evaluate(env)
            + e.root.diff("r").evaluate(env) * bg.dr_dv(u, v)
            + e.root.diff("t").evaluate(env)
        )

    def _fd(self, name, u, v, bg, axis):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        x = u if axis == "u" else v
        step = np.maximum(1e-6, 1e-8 * np.abs(x))
        if axis == "u":
            hi = self.eval(name, u + step, v, bg)
            lo = self.eval(name, u - step, v, bg)
        else:
            hi = self.eval(name, u, v + step, bg)
            lo = self.eval(name, u, v - step, bg)
        return (hi - lo) / (2.0 * step)


@dataclass(frozen=True)
class TildeCoefficients:
    """Radiation-field coefficients at one point.

    The checked values come from rewriting the wave operator on psi = r*phi:

        wcheck0 = -(Om2/4) w0 + (dr_du Om2/4) w1 + (dr_dv Om2/4) q
        wcheck1 = -(Om2/4) w1,   qcheck = -(Om2/4) q
        Wcheck0 = -(Om2/4) W0 + (dr_du Om2/4) W1 + (dr_dv Om2/4) Q + r d2r_dudv
        Wcheck1 = -(Om2/4) W1,   Qcheck = -(Om2/4) Q

    and the solver consumes the epsilon-combined source triple

        s0 = eps*wcheck0 + Wcheck0,  s1 = eps*wcheck1 + Wcheck1,
        sq = eps*qcheck + Qcheck,

    which avoids the 1/eps split entirely (tilde values are None at eps = 0).
    """

    wcheck0: float
    wcheck1: float
    qcheck: float
    Wcheck0: float
    Wcheck1: float
    Qcheck: float
    s0: float
    s1: float
    sq: float
    wtilde0: float | None
    wtilde1: float | None
    qtilde: float | None


def source_coefficients(ps: PotentialSet, bg: Background, u, v, geo: dict | None = None):
    """Vectorized (s0, s1, sq) used by the marcher and the identity checks."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if geo is None:
        geo = bg.geometry(u, v)
    r = geo["r"]
    om = geo["omega2"] / 4.0
    dru = geo["dr_du"]
    drv = geo["dr_dv"]
    w0 = ps.eval("w0", u, v, bg, r=r)
    w1 = ps.eval("w1", u, v, bg, r=r)
    qq = ps.eval("q", u, v, bg, r=r)
    W0 = ps.eval("W0", u, v, bg, r=r)
    W1 = ps.eval("W1", u, v, bg, r=r)
    Qq = ps.eval("Q", u, v, bg, r=r)
    wc0 = -om * w0 + dru * om * w1 + drv * om * qq
    Wc0 = -om * W0 + dru * om * W1 + drv * om * Qq + r * geo["d2r_dudv"]
    s0 = ps.epsilon * wc0 + Wc0
    s1 = ps.epsilon * (-om * w1) + (-om * W1)
    sq = ps.epsilon * (-om * qq) + (-om * Qq)
    return s0, s1, sq


def tilde_transform(ps: PotentialSet, bg: Background, point) -> TildeCoefficients:
    """Evaluate the checked / combined coefficients at one exterior point."""
    u, v = point
    if bg.r(u, v) <= 0:
        raise ValueError(f"point (u={u}, v={v}) is outside the exterior")
    om = float(bg.omega2(u, v)) / 4.0
    dru = float(bg.dr_du(u, v))
    drv = float(bg.dr_dv(u, v))
    r = float(bg.r(u, v))
    vals = {n: float(ps.eval(n, u, v, bg)) for n in COEFF_NAMES}
    wc0 = -om * vals["w0"] + dru * om * vals["w1"] + drv * om * vals["q"]
    wc1 = -om * vals["w1"]
    qc = -om * vals["q"]
    Wc0 = -om * vals["W0"] + dru * om * vals["W1"] + drv * om * vals["Q"] + r * float(
        bg.d2r_dudv(u, v)
    )
    Wc1 = -om * vals["W1"]
    Qc = -om * vals["Q"]
    eps = ps.epsilon
    s0, s1, sq = eps * wc0 + Wc0, eps * wc1 + Wc1, eps * qc + Qc
    if eps != 0.0:
        tilde = (wc0 + Wc0 / eps, wc1 + Wc1 / eps, qc + Qc / eps)
    else:
        tilde = (None, None, None)
    return TildeCoefficients(
        wcheck0=wc0, wcheck1=wc1, qcheck=qc,
        Wcheck0=Wc0, Wcheck1=Wc1, Qcheck=Qc,
        s0=s0, s1=s1, sq=sq,
        wtilde0=tilde[0], wtilde1=tilde[1], qtilde=tilde[2],
    )


# ---------------------------------------------------------------------------
# Assumption checkers (H1 / H3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClauseResult:
    kind: str           # "bounded" or "o1"
    sup: float          # supremum over the whole region
    sup_inner: float    # supremum over the inner r-band (o1 clauses)
    sup_outer: float    # supremum over the outer r-band (o1 clauses)
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    name: str
    clauses: dict
    passed: bool
    ceiling: float

    def failing(self):
        return sorted(k for k, c in self.clauses.items() if not c.passed)


def _check_clauses(quantities, r, kinds, ceiling, o1_factor):
    """Shared two-band machinery.

    bounded clauses: sup <= ceiling.  o(1) clauses: split samples at the
    geometric-mean radius and require sup(outer band) <= o1_factor *
    sup(inner band) -- a falsifiable proxy for decay, not a proof.
    """
    rmin, rmax = float(np.min(r)), float(np.max(r))
    split = math.sqrt(rmin * rmax)
    inner = r <= split
    outer = ~inner
    clauses = {}
    ok = True
    for name, q in quantities.items():
        kind = kinds[name]
        if not np.all(np.isfinite(q)):
            idx = np.argwhere(~np.isfinite(np.asarray(q)))
            note = f"non-finite at sample r={np.asarray(r)[tuple(idx[0])]:g}"
            clauses[name] = ClauseResult(kind, float("inf"), float("inf"),
                                         float("inf"), False, note)
            ok = False
            continue
        sup = float(np.max(q))
        si = float(np.max(q[inner])) if inner.any() else 0.0
        so = float(np.max(q[outer])) if outer.any() else 0.0
        if kind == "bounded":
            passed = sup <= ceiling
            note = "" if passed else f"sup {sup:g} > ceiling {ceiling:g}"
        else:
            passed = so <= max(o1_factor * si, 1e-12)
            note = "" if passed else (
                f"outer sup {so:g} not below {o1_factor:g} x inner sup {si:g}"
            )
        clauses[name] = ClauseResult(kind, sup, si, so, passed, note)
        ok = ok and passed
    return clauses, ok


def verify_h1(
    ps: PotentialSet,
    region: SampleRegion,
    bg: Background | None = None,
    ceiling: float = 10.0,
    o1_factor: float = 0.5,
) -> AssumptionReport:
    """Scale-criticality check: small coefficients bounded (with v-derivative
    weights), capital coefficients o(1) at large r via the two-band proxy."""
    bg = bg or minkowski()
    uu, vv = region.lattice()
    r = bg.r(uu, vv)

    def val(n):
        return np.abs(ps.eval(n, uu, vv, bg))

    def dv(n):
        return np.abs(ps.eval_dv(n, uu, vv, bg))

    quantities = {
        "|w0|": val("w0"),
        "|w1|": val("w1"),
        "|q|": val("q"),
        "r|dv w0|": r * dv("w0"),
        "r^2|dv q|": r * r * dv("q"),
        "|W0|": val("W0"),
        "|W1|": val("W1"),
        "|Q|": val("Q"),
        "r|dv W0|": r * dv("W0"),
        "r^2|dv W1|": r * r * dv("W1"),
        "r^2|dv Q|": r * r * dv("Q"),
    }
    kinds = {k: ("o1" if ("W" in k or "Q" in k) else "bounded") for k in quantities}
    clauses, ok = _check_clauses(quantities, r, kinds, ceiling, o1_factor)
    return AssumptionReport("H1", clauses, ok, ceiling)


def verify_h3(
    ps: PotentialSet,
    region: SampleRegion,
    bg: Background | None = None,
    ceiling: float = 10.0,
    o1_factor: float = 0.5,
) -> AssumptionReport:
    """Extra u-derivative decay needed for the sharper pointwise estimate:
    r|du(small coefficients)| bounded, r|du(capital coefficients)| o(1)."""
    bg = bg or minkowski()
    uu, vv = region.lattice()
    r = bg.r(uu, vv)

    def du(n):
        return np.abs(ps.eval_du(n, uu, vv, bg))

    quantities = {
        "r|du w0|": r * du("w0"),
        "r|du w1|": r * du("w1"),
        "r|du q|": r * du("q"),
        "r|du W0|": r * du("W0"),
        "r|du W1|": r * du("W1"),
        "r|du Q|": r * du("Q"),
    }
    kinds = {k: ("o1" if ("W" in k or "Q" in k) else "bounded") for k in quantities}
    clauses, ok = _check_clauses(quantities, r, kinds, ceiling, o1_factor)
    return AssumptionReport("H3", clauses, ok, ceiling)
