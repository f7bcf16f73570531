"""Reversible mass-action reaction networks.

A network is read from a small text grammar, one reaction per line::

    A + 2B <-> B + C ; kf=1, kr=0.5
    X -> Y
    Y -> X ; kf=3

``<->`` declares a reversible pair directly. Two ``->`` lines with swapped
complexes are merged into one pair. ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import sympy

NEGATIVE_TOLERANCE = 1e-12


class NetworkSyntaxError(ValueError):
    """Raised for malformed network text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Species:
    name: str
    index: int
    diffusion: float = 1.0

    def __post_init__(self):
        if not self.diffusion >= 0:
            raise ValueError(f"diffusion of {self.name} must be >= 0, got {self.diffusion}")


@dataclass(frozen=True)
class ReversiblePair:
    """Reactant complex ``alpha`` and product complex ``beta`` with both rate constants."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    k_fwd: float = 1.0
    k_bwd: float = 1.0

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta must have the same length")
        if any(c < 0 for c in self.alpha) or any(c < 0 for c in self.beta):
            raise ValueError("stoichiometric coefficients must be nonnegative")
        if tuple(self.alpha) == tuple(self.beta):
            raise ValueError("degenerate reaction: reactant and product complexes are equal")
        if not (self.k_fwd > 0 and self.k_bwd > 0):
            raise ValueError("rate constants must be positive")

    @property
    def reaction_vector(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=np.int64) - np.asarray(self.alpha, dtype=np.int64)


@dataclass(frozen=True)
class IndexSets:
    """Species index sets of a single reversible pair.

    ``L`` holds species consumed by the forward reaction, ``R`` those produced,
    ``L0``/``R0`` the supports of the reactant and product complexes, and
    ``gamma`` the componentwise minimum of the two complexes.
    """

    L: frozenset
    R: frozenset
    L0: frozenset
    R0: frozenset
    gamma: tuple[int, ...]

    @classmethod
    def from_pair(cls, pair: ReversiblePair) -> "IndexSets":
        a, b = pair.alpha, pair.beta
        n = len(a)
        return cls(
            L=frozenset(i for i in range(n) if a[i] > b[i]),
            R=frozenset(i for i in range(n) if a[i] < b[i]),
            L0=frozenset(i for i in range(n) if a[i] != 0),
            R0=frozenset(i for i in range(n) if b[i] != 0),
            gamma=tuple(min(x, y) for x, y in zip(a, b)),
        )


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    pairs: tuple[ReversiblePair, ...]
    _names: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("a network needs at least one reversible pair")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError(f"species names must be unique: {names}")
        for pos, s in enumerate(self.species):
            if s.index != pos:
                raise ValueError(f"species {s.name} has index {s.index}, expected {pos}")
        n = len(self.species)
        for p in self.pairs:
            if len(p.alpha) != n:
                raise ValueError(f"complex length {len(p.alpha)} does not match {n} species")
        object.__setattr__(self, "_names", {name: i for i, name in enumerate(names)})

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def diffusion(self) -> np.ndarray:
        return np.array([s.diffusion for s in self.species], dtype=float)

    def index(self, name: str) -> int:
        try:
            return self._names[name]
        except KeyError:
            raise KeyError(f"unknown species {name!r}") from None

    def stoichiometric_matrix(self) -> np.ndarray:
        """Integer matrix with one column ``beta - alpha`` per pair."""
        return np.stack([p.reaction_vector for p in self.pairs], axis=1)

    def single_pair(self) -> ReversiblePair:
        if len(self.pairs) != 1:
            raise ValueError(f"operation requires a single reversible pair, network has {len(self.pairs)}")
        return self.pairs[0]

    def index_sets(self) -> IndexSets:
        return IndexSets.from_pair(self.single_pair())

    def with_diffusion(self, diffusion: Sequence[float] | dict) -> "ReactionNetwork":
        if isinstance(diffusion, dict):
            unknown = set(diffusion) - set(self.names)
            if unknown:
                raise KeyError(f"unknown species in diffusion: {sorted(unknown)}")
            values = [float(diffusion.get(s.name, s.diffusion)) for s in self.species]
        else:
            values = [float(d) for d in diffusion]
            if len(values) != self.n_species:
                raise ValueError(f"expected {self.n_species} diffusion constants, got {len(values)}")
        species = tuple(Species(s.name, s.index, d) for s, d in zip(self.species, values))
        return ReactionNetwork(species, self.pairs)

    def __str__(self) -> str:
        return format_network(self)


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<arrow><->|->)|(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[+;,=])"
)


class _LineParser:
    """Recursive-descent parser over the tokens of one reaction line."""

    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise NetworkSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.end_col = len(text) + 1
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, "", self.end_col)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            got = tok[1] or "end of line"
            raise NetworkSyntaxError(f"expected {want}, got {got!r}", self.lineno, tok[2])
        self.i += 1
        return tok

    def reaction(self):
        lhs = self.complex()
        arrow = self.take("arrow")[1]
        rhs = self.complex()
        kf, kr, given = 1.0, 1.0, set()
        if self.peek()[1] == ";":
            self.take()
            kf, kr, given = self.rates(arrow)
        if self.peek()[0] is not None:
            tok = self.peek()
            raise NetworkSyntaxError(f"unexpected {tok[1]!r}", self.lineno, tok[2])
        return lhs, arrow, rhs, kf, kr

    def complex(self):
        terms = [self.term()]
        while self.peek()[1] == "+":
            self.take()
            terms.append(self.term())
        if terms == [None]:
            return []
        if None in terms:
            raise NetworkSyntaxError("the empty complex 0 cannot be combined with species", self.lineno, self.peek()[2])
        return terms

    def term(self):
        kind, value, col = self.peek()
        coef = 1
        if kind == "num":
            self.take()
            if not re.fullmatch(r"\d+", value):
                raise NetworkSyntaxError(f"stoichiometric coefficient must be an integer, got {value}", self.lineno, col)
            coef = int(value)
            if self.peek()[0] != "ident":
                if coef == 0:
                    return None
                raise NetworkSyntaxError("expected species name after coefficient", self.lineno, self.peek()[2])
        name = self.take("ident")[1]
        if coef == 0:
            raise NetworkSyntaxError("zero coefficient", self.lineno, col)
        return name, coef

    def rates(self, arrow):
        out = {}
        while True:
            kind, key, col = self.take("ident")
            if key not in ("kf", "kr"):
                raise NetworkSyntaxError(f"unknown rate key {key!r}", self.lineno, col)
            if arrow == "->" and key == "kr":
                raise NetworkSyntaxError("kr is not allowed on an irreversible arrow", self.lineno, col)
            if key in out:
                raise NetworkSyntaxError(f"duplicate rate key {key!r}", self.lineno, col)
            self.take("op", "=")
            _, num, ncol = self.take("num")
            k = float(num)
            if not k > 0:
                raise NetworkSyntaxError(f"rate constant must be positive, got {num}", self.lineno, ncol)
            out[key] = k
            if self.peek()[1] != ",":
                break
            self.take()
        return out.get("kf", 1.0), out.get("kr", 1.0), set(out)


def parse_network(text: str, diffusion: Sequence[float] | dict | None = None) -> ReactionNetwork:
    """Parse network text into a :class:`ReactionNetwork`.

    Species are numbered in order of first mention. Repeated species within a
    complex are merged (``B + B`` is ``2B``). Diffusion constants default to 1.
    """
    if not text or not text.strip():
        raise NetworkSyntaxError("empty network text", 1, 1)
    order: dict[str, int] = {}
    raw = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        parser = _LineParser(body, lineno)
        lhs, arrow, rhs, kf, kr = parser.reaction()
        for name, _ in lhs + rhs:
            order.setdefault(name, len(order))
        raw.append((lineno, lhs, arrow, rhs, kf, kr))
    if not raw:
        raise NetworkSyntaxError("no reactions found", 1, 1)

    n = len(order)

    def vec(terms):
        v = [0] * n
        for name, coef in terms:
            v[order[name]] += coef
        return tuple(v)

    pairs: list[ReversiblePair] = []
    pending: dict[tuple, tuple] = {}
    for lineno, lhs, arrow, rhs, kf, kr in raw:
        a, b = vec(lhs), vec(rhs)
        if a == b:
            raise NetworkSyntaxError("degenerate reaction: both sides are the same complex", lineno, 1)
        if arrow == "<->":
            pairs.append(ReversiblePair(a, b, kf, kr))
            continue
        partner = pending.pop((b, a), None)
        if partner is not None:
            pairs.append(ReversiblePair(b, a, partner[1], kf))
        elif (a, b) in pending:
            raise NetworkSyntaxError("duplicate irreversible reaction", lineno, 1)
        else:
            pending[(a, b)] = (lineno, kf)
    if pending:
        lineno = min(v[0] for v in pending.values())
        raise NetworkSyntaxError("irreversible reaction without a reverse partner", lineno, 1)

    species = tuple(Species(name, i) for name, i in order.items())
    net = ReactionNetwork(species, tuple(pairs))
    return net if diffusion is None else net.with_diffusion(diffusion)


def _format_complex(names: Sequence[str], coeffs: Sequence[int]) -> str:
    terms = [(f"{c}{name}" if c != 1 else name) for name, c in zip(names, coeffs) if c]
    return " + ".join(terms) if terms else "0"


def _format_rate(k: float) -> str:
    return repr(float(k))


def format_network(net: ReactionNetwork) -> str:
    """Canonical text form; ``parse_network`` of the result reproduces ``net``."""
    lines = []
    for p in net.pairs:
        line = f"{_format_complex(net.names, p.alpha)} <-> {_format_complex(net.names, p.beta)}"
        if p.k_fwd != 1.0 or p.k_bwd != 1.0:
            line += f" ; kf={_format_rate(p.k_fwd)}, kr={_format_rate(p.k_bwd)}"
        lines.append(line)
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Kinetics


def _checked_state(net: ReactionNetwork, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != net.n_species:
        raise ValueError(f"state has shape {u.shape}, expected ({net.n_species},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("state must be finite")
    if np.any(u < -NEGATIVE_TOLERANCE):
        raise ValueError(f"state has negative entries beyond {NEGATIVE_TOLERANCE}: {u}")
    return np.maximum(u, 0.0)


def monomial(u: np.ndarray, exponents: Sequence[int]) -> float:
    """``prod(u_i ** e_i)`` with ``0 ** 0 == 1``."""
    out = 1.0
    for ui, e in zip(u, exponents):
        if e:
            out *= ui**e
    return out


def mass_action_rate(net: ReactionNetwork, u) -> np.ndarray:
    """Net species production rate ``R(u)`` under mass action."""
    u = _checked_state(net, u)
    out = np.zeros(net.n_species)
    for p in net.pairs:
        flux = p.k_fwd * monomial(u, p.alpha) - p.k_bwd * monomial(u, p.beta)
        out += flux * p.reaction_vector
    return out


def _monomial_gradient(u: np.ndarray, exponents: Sequence[int]) -> np.ndarray:
    grad = np.zeros(len(u))
    for j, e in enumerate(exponents):
        if e == 0:
            continue
        lowered = list(exponents)
        lowered[j] -= 1
        grad[j] = e * monomial(u, lowered)
    return grad


def rate_jacobian(net: ReactionNetwork, u) -> np.ndarray:
    """Analytic Jacobian ``dR_i/du_j`` of :func:`mass_action_rate`."""
    u = _checked_state(net, u)
    jac = np.zeros((net.n_species, net.n_species))
    for p in net.pairs:
        dflux = p.k_fwd * _monomial_gradient(u, p.alpha) - p.k_bwd * _monomial_gradient(u, p.beta)
        jac += np.outer(p.reaction_vector, dflux)
    return jac


def conservation_basis(net: ReactionNetwork) -> np.ndarray:
    """Integer basis of the left null space of the stoichiometric matrix.

    Rows are in reduced row-echelon shape, each scaled to coprime integers with
    a positive leading entry. Returns an array of shape ``(0, n)`` when the
    stoichiometric matrix has full row rank.
    """
    S = sympy.Matrix(net.stoichiometric_matrix().tolist())
    kernel = S.T.nullspace()
    n = net.n_species
    if not kernel:
        return np.zeros((0, n), dtype=np.int64)
    rref, _ = sympy.Matrix.hstack(*kernel).T.rref()
    rows = []
    for r in range(rref.rows):
        row = [sympy.Rational(x) for x in rref.row(r)]
        if all(x == 0 for x in row):
            continue
        lcm = 1
        for x in row:
            lcm = sympy.ilcm(lcm, x.q)
        ints = [int(x * lcm) for x in row]
        g = 0
        for x in ints:
            g = math.gcd(g, abs(x))
        ints = [x // g for x in ints]
        lead = next(x for x in ints if x != 0)
        if lead < 0:
            ints = [-x for x in ints]
        rows.append(ints)
    return np.array(rows, dtype=np.int64)


def complexes(net: ReactionNetwork) -> list[tuple[int, ...]]:
    seen: list[tuple[int, ...]] = []
    for p in net.pairs:
        for y in (tuple(p.alpha), tuple(p.beta)):
            if y not in seen:
                seen.append(y)
    return seen


def is_complex_balanced(net: ReactionNetwork, u, tol: float = 1e-10) -> bool:
    """True when inflow equals outflow at every complex within ``tol * (1 + outflow)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (net.n_species,) or not np.all(u > 0):
        raise ValueError("complex balance is tested at strictly positive states only")
    balance = {y: [0.0, 0.0] for y in complexes(net)}  # inflow, outflow
    for p in net.pairs:
        a, b = tuple(p.alpha), tuple(p.beta)
        fwd = p.k_fwd * monomial(u, a)
        bwd = p.k_bwd * monomial(u, b)
        balance[a][1] += fwd
        balance[b][0] += fwd
        balance[b][1] += bwd
        balance[a][0] += bwd
    return all(abs(inflow - outflow) <= tol * (1.0 + outflow) for inflow, outflow in balance.values())


# --------------------------------------------------------------------------
# Field-level kinetics used by the simulator


def monomial_field(values: np.ndarray, exponents: Iterable[int]) -> np.ndarray:
    out = np.ones(values.shape[1:])
    for ui, e in zip(values, exponents):
        if e:
            out = out * ui**e
    return out


def _power_increment(x, h, e: int):
    """``(x + h)**e - x**e`` without cancellation: ``h * sum_k (x+h)**k * x**(e-1-k)``."""
    xh = x + h
    acc = np.zeros(np.broadcast(x, h).shape)
    for k in range(e):
        acc = acc + xh**k * x ** (e - 1 - k)
    return h * acc


def monomial_increment(base: np.ndarray, dev: np.ndarray, exponents: Sequence[int]) -> np.ndarray:
    """``(base + dev)**y - base**y`` for a species vector ``base`` and fields ``dev``.

    Telescoped one species at a time so the result keeps relative accuracy when
    ``dev`` is tiny compared to ``base``.
    """
    shape = dev.shape[1:]
    total = np.zeros(shape)
    # prefix holds prod_{j<i} (base_j + dev_j)**y_j; suffix prod_{j>i} base_j**y_j
    suffix = [1.0] * (len(exponents) + 1)
    for i in range(len(exponents) - 1, -1, -1):
        suffix[i] = suffix[i + 1] * (base[i] ** exponents[i] if exponents[i] else 1.0)
    prefix = np.ones(shape)
    for i, e in enumerate(exponents):
        if not e:
            continue
        total = total + prefix * _power_increment(base[i], dev[i], e) * suffix[i + 1]
        prefix = prefix * (base[i] + dev[i]) ** e
    return total


def reaction_field(net: ReactionNetwork, base: np.ndarray, dev: np.ndarray, include_base_rate: bool = True) -> np.ndarray:
    """Pointwise ``R(base + dev)`` over fields of shape ``(n_species, *cells)``.

    With ``include_base_rate=False`` the constant ``R(base)`` is dropped, which
    treats ``base`` as an exact fixed point.
    """
    out = np.zeros_like(dev, dtype=float)
    expand = (slice(None),) + (None,) * (dev.ndim - 1)
    for p in net.pairs:
        flux = p.k_fwd * monomial_increment(base, dev, p.alpha) - p.k_bwd * monomial_increment(base, dev, p.beta)
        if include_base_rate:
            flux = flux + (p.k_fwd * monomial(base, p.alpha) - p.k_bwd * monomial(base, p.beta))
        out += p.reaction_vector.astype(float)[expand] * flux
    return out
