"""Intertwiner descriptors for words in the groupoid of labeled triangulations.

A word is compiled into a list of factor records in the order they act on a
state: the permutation first, then for each flip from the last to the first
the monomial part followed by the automorphism part. Intertwiners stay
symbolic. Only the linear part is evaluated exactly, and words on at most two
variables can be applied numerically on a grid.

Linear parts use tropical signs. Starting from the all-negative tropical
point, a flip at arc k whose tropical coordinate is negative contributes the
standard monomial map; otherwise it contributes the companion map that also
carries the asymptotic shear of the automorphism part. With this choice the
linear parts of all the consistency relations are exactly the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .heisenberg import (
    LinearSymplecticMap,
    OperatorCoeffs,
    frac_str,
    identity_map,
    monomial_map,
    permutation_map,
)
from .opcalc import (
    F_BOOSTS,
    Composite,
    Grid,
    GridState,
    Pullback,
    UnsupportedShape,
    plan_F,
    test_states,
)
from .qdilog import QDParams
from .triangulation import (
    Flip,
    GroupoidWord,
    IllegalFlip,
    LabeledTriangulation,
    MappingClassLoop,
    MarkedTriangulation,
    Permute,
    exchange_matrix,
    find_path,
    mutate_exchange,
    pentagon_word,
    verify_loop,
)

__all__ = [
    "Monomial",
    "Auto",
    "Perm",
    "IntertwinerWord",
    "RepresentationElement",
    "InvalidLoop",
    "TropicalDegeneracy",
    "compile_word",
    "compile_exchange",
    "linear_part",
    "to_plan",
    "phase_residual",
    "local_pentagon",
    "corrupt_auto",
    "relation_instances",
    "verify_relation_suite",
    "rho",
    "research",
    "RelationReport",
]


class InvalidLoop(ValueError):
    pass


class TropicalDegeneracy(ArithmeticError):
    """A tropical coordinate vanished, so the flip sign is undefined."""


# -- factor records ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Monomial:
    """K'_k: the coordinate change of a flip at ``arc`` for the exchange matrix ``eps``."""

    arc: int
    eps: np.ndarray
    sign: int = 1  # tropical sign, used only by the linear part

    @property
    def map(self) -> LinearSymplecticMap:
        return monomial_map(self.eps, self.arc, 1)

    def linear(self) -> LinearSymplecticMap:
        return monomial_map(self.eps, self.arc, self.sign)

    def to_json(self) -> dict:
        return {"type": "monomial", "arc": self.arc, "tropical_sign": self.sign, "matrix": self.map.to_json()}


@dataclass(frozen=True, eq=False)
class Auto:
    """F(x_k, y_k) with y_k = sum_j eps_kj t_j taken from the snapshot ``eps``."""

    params: QDParams
    arc: int
    eps: np.ndarray

    def linear(self) -> LinearSymplecticMap:
        return identity_map(self.eps.shape[0])

    def to_json(self) -> dict:
        return {
            "type": "auto",
            "arc": self.arc,
            "lambda": self.params.lam,
            "hbar": float(f"{self.params.hbar:.17g}"),
            "y": [int(v) for v in self.eps[self.arc - 1]],
        }


@dataclass(frozen=True, eq=False)
class Perm:
    sigma: dict
    n: int

    @property
    def map(self) -> LinearSymplecticMap:
        return permutation_map(self.sigma, self.n)

    def linear(self) -> LinearSymplecticMap:
        return self.map

    def to_json(self) -> dict:
        return {"type": "perm", "cycles": Permute.of(self.sigma).cycles()}


Factor = Union[Monomial, Auto, Perm]


@dataclass(frozen=True, eq=False)
class IntertwinerWord:
    """Factors in the order they act on a state (first entry acts first)."""

    source: object
    target: object
    factors: tuple
    n: int
    phase: str = "undetermined"

    def linear_part(self) -> LinearSymplecticMap:
        return linear_part(self)

    def __len__(self):
        return len(self.factors)

    def to_json(self) -> dict:
        return {
            "factors": [f.to_json() for f in self.factors],
            "linear_part": self.linear_part().to_json(),
            "phase": self.phase,
        }


# -- compilation ---------------------------------------------------------------------------


def compile_exchange(eps, moves: Sequence, params: QDParams, source=None, target=None) -> IntertwinerWord:
    """Compile flips and permutations acting on an exchange matrix alone."""
    e = np.asarray(eps, dtype=np.int64).copy()
    n = e.shape[0]
    trop = np.full(n, Fraction(-1), dtype=object)
    steps: list[list[Factor]] = []
    for mv in moves:
        if isinstance(mv, Flip):
            k = mv.arc
            if trop[k - 1] == 0:
                raise TropicalDegeneracy(f"tropical coordinate of arc {k} vanished")
            sign = 1 if trop[k - 1] < 0 else -1
            trop = monomial_map(e, k, sign).coords.T.dot(trop)
            snap = e.copy()
            snap.setflags(write=False)
            steps.append([Monomial(k, snap, sign), Auto(params, k, snap)])
            e = np.asarray(mutate_exchange(e, k), dtype=np.int64)
        elif isinstance(mv, Permute):
            sigma = mv.mapping()
            P = permutation_map(sigma, n).coords.astype(np.int64)
            trop = P.astype(object).dot(trop)
            e = P.dot(e).dot(P.T)
            steps.append([Perm(dict(sigma), n)])
        else:
            raise TypeError(f"unknown move {mv!r}")
    factors: list[Factor] = []
    for step in reversed(steps):
        factors.extend(step)
    return IntertwinerWord(source, target, tuple(factors), n)


def compile_word(w: GroupoidWord, params: QDParams) -> IntertwinerWord:
    """Intertwiner descriptor of a groupoid word (validity is checked when the word is built)."""
    return compile_exchange(exchange_matrix(w.start).eps, w.moves, params, w.start, w.end())


def linear_part(word: IntertwinerWord) -> LinearSymplecticMap:
    """Exact product of the linear parts, composed along the word."""
    L = identity_map(word.n)
    for f in reversed(word.factors):
        L = L.then(f.linear())
    return L


# -- numerics on at most two variables --------------------------------------------------------


def _auto_operators(f: Auto) -> tuple[OperatorCoeffs, OperatorCoeffs]:
    n = f.eps.shape[0]
    var = tuple(range(1, n + 1))
    return OperatorCoeffs.momentum(var, f.arc), OperatorCoeffs(var, [int(v) for v in f.eps[f.arc - 1]], [0] * n)


def to_plan(word: IntertwinerWord, grid: Grid) -> Composite:
    """Grid plan of the full operator in the reducible model on L^2(R^n), n = grid.d."""
    if word.n != grid.d:
        raise UnsupportedShape(f"word acts on {word.n} variables, grid has {grid.d} axes")
    plans = []
    for f in word.factors:
        if isinstance(f, Auto):
            x, y = _auto_operators(f)
            plans.append(plan_F(f.params, x, y, grid))
        else:
            plans.append(Pullback(f.map.coords.astype(np.int64)))
    return Composite(plans)


def phase_residual(plan, states: Sequence[GridState]) -> list[float]:
    """min over unit c of |W psi - c psi| / |psi| for each state."""
    out = []
    for s in states:
        w = plan(s)
        c = s.inner(w)
        c = c / abs(c) if abs(c) > 0 else 1.0
        out.append(GridState(w.values - c * s.values, s.grid).norm() / s.norm())
    return out


def _rank2_pentagon_moves() -> list:
    return [Flip(1), Flip(2), Flip(1), Flip(2), Flip(1), Permute.of({1: 2, 2: 1})]


def local_pentagon(params: QDParams, e: int) -> IntertwinerWord:
    """The pentagon word on two arcs with exchange matrix [[0, e], [-e, 0]]."""
    return compile_exchange([[0, e], [-e, 0]], _rank2_pentagon_moves(), params)


def corrupt_auto(word: IntertwinerWord, index: int, arc: int) -> IntertwinerWord:
    """Copy of ``word`` whose ``index``-th automorphism factor uses the wrong arc."""
    autos = [i for i, f in enumerate(word.factors) if isinstance(f, Auto)]
    pos = autos[index]
    bad = word.factors[pos]
    factors = list(word.factors)
    factors[pos] = Auto(bad.params, arc, bad.eps)
    return IntertwinerWord(word.source, word.target, tuple(factors), word.n, word.phase)


# -- relation suite ---------------------------------------------------------------------------


def _transpositions(arcs) -> list[Permute]:
    arcs = list(arcs)
    return [Permute.of({a: b, b: a}) for i, a in enumerate(arcs) for b in arcs[i + 1 :]]


def relation_instances(T: LabeledTriangulation) -> list[tuple[str, tuple, GroupoidWord]]:
    """Every applicable instance at T of the flip relations and permutation relations.

    Permutation relations are enumerated over transpositions, which generate.
    """
    eps = exchange_matrix(T).eps
    legal = set(T.legal_flips())
    out = []
    for i in T.arcs:
        if i in legal:
            out.append(("twice-flip", (i,), GroupoidWord(T, (Flip(i), Flip(i)))))
    for i in T.arcs:
        for j in T.arcs:
            e = eps[i - 1, j - 1]
            if i == j or (e == 0 and i > j):
                continue
            try:
                if e == 0:
                    w = GroupoidWord(T, (Flip(i), Flip(j), Flip(i), Flip(j)))
                    out.append(("quadrilateral", (i, j), w))
                elif abs(e) == 1:
                    out.append(("pentagon", (i, j), pentagon_word(T, i, j)))
            except IllegalFlip:
                continue
    transp = _transpositions(T.arcs)
    for s in transp:
        for g in transp:
            sm, gm = s.mapping(), g.mapping()
            comp = {a: gm.get(sm.get(a, a), sm.get(a, a)) for a in T.arcs}
            inv = {v: k for k, v in comp.items()}
            w = GroupoidWord(T, (s, g, Permute.of(inv)))
            out.append(("permutations", (tuple(s.pairs), tuple(g.pairs)), w))
    for i in sorted(legal):
        for s in transp:
            sig = s.mapping()
            w = GroupoidWord(T, (Flip(i), s, Flip(sig.get(i, i)), s.inverse()))
            out.append(("flip-permutation", (i, tuple(s.pairs)), w))
    return out


@dataclass
class RelationReport:
    surface: dict
    lam: int
    hbar: float
    instances: list
    exact_ok: bool
    pentagon: dict
    negative_control: float | None
    tol: float
    grid: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.exact_ok and all(r <= self.tol for r in self.pentagon.values())

    def to_json(self) -> dict:
        return {
            "surface": self.surface,
            "lambda": self.lam,
            "hbar": float(f"{self.hbar:.17g}"),
            "grid": self.grid,
            "instances": self.instances,
            "exact_ok": self.exact_ok,
            "pentagon_residual": {str(k): float(f"{v:.17g}") for k, v in sorted(self.pentagon.items())},
            "negative_control_residual": None if self.negative_control is None else float(f"{self.negative_control:.17g}"),
            "tolerance": self.tol,
            "passed": self.passed,
        }


def verify_relation_suite(
    T: LabeledTriangulation,
    params: QDParams,
    grid: Grid | None = None,
    tol: float = 1e-3,
    negative_control: bool = True,
    numeric: bool = True,
) -> RelationReport:
    """Exact closure and linear-part checks for every relation instance at T.

    The pentagon is also checked as an operator identity, up to a phase, in
    the two-variable model with exchange matrix [[0, e], [-e, 0]] for each
    sign e occurring in the exchange matrix of T.
    """
    eps = exchange_matrix(T).eps
    rows = []
    ok = True
    for kind, arcs, w in relation_instances(T):
        closes = w.end() == T
        lin = compile_word(w, params).linear_part().is_identity()
        ok &= closes and lin
        rows.append({"relation": kind, "arcs": _jsonable(arcs), "closes": closes, "linear_identity": lin})
    residuals: dict[int, float] = {}
    neg = None
    g = grid or Grid(2, 512, 12.0)
    if numeric:
        states = test_states(g, boosts=F_BOOSTS)
        signs = sorted({int(np.sign(v)) for v in eps.flat if abs(v) == 1})
        for e in signs:
            residuals[e] = max(phase_residual(to_plan(local_pentagon(params, e), g), states))
        if negative_control:
            word = local_pentagon(params, signs[0] if signs else 1)
            first = next(f for f in word.factors if isinstance(f, Auto))
            neg = max(phase_residual(to_plan(corrupt_auto(word, 0, 3 - first.arc), g), states))
    return RelationReport(
        {"genus": T.signature.genus, "punctures": T.signature.punctures},
        params.lam,
        params.hbar,
        rows,
        ok,
        residuals,
        neg,
        tol,
        {"N": g.N, "L": g.L},
    )


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


# -- mapping class group ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RepresentationElement:
    loop: MappingClassLoop
    word: IntertwinerWord
    params: QDParams

    def linear_part(self) -> LinearSymplecticMap:
        return self.word.linear_part()

    def __mul__(self, other: "RepresentationElement") -> "RepresentationElement":
        """rho(h1) rho(h2), realized by concatenating the loop words."""
        return rho(self.loop.then(other.loop), self.params)

    def to_json(self) -> dict:
        T = self.loop.start
        return {
            "surface": T.to_json(),
            "lambda": self.params.lam,
            "hbar": float(f"{self.params.hbar:.17g}"),
            "loop": self.loop.word.to_json(),
            "factors": [f.to_json() for f in self.word.factors],
            "linear_part": self.linear_part().to_json(),
            "phase": self.word.phase,
        }


def rho(loop: MappingClassLoop, params: QDParams) -> RepresentationElement:
    if not verify_loop(loop):
        raise InvalidLoop("closing isomorphism does not identify the end with the start")
    return RepresentationElement(loop, compile_word(loop.word, params), params)


def research(w: GroupoidWord, rng: np.random.Generator, window: int = 6) -> GroupoidWord:
    """An independent word between the same marked endpoints.

    The word is cut into windows of at most ``window`` moves, and each window
    is replaced by a shortest path between its marked endpoints.
    """
    start = MarkedTriangulation.generic(w.start, rng)
    trail = w.marked_trail(start)
    moves: list = []
    for a in range(0, len(w.moves), window):
        b = min(a + window, len(w.moves))
        seg = find_path(trail[a], trail[b], b - a)
        moves.extend(seg.moves)
    return GroupoidWord(w.start, tuple(moves))

