"""Labeled ideal triangulations of punctured surfaces.

A triangulation is stored as a list of triangles, each a triple of arc labels
read counterclockwise. Because no triangle is self-folded, every label occurs
in exactly two distinct triangles, and this data already determines the
gluing (an oriented surface glues matching sides with reversed orientation).

Side ``s`` of a triangle runs from its vertex ``s`` to vertex ``s + 1``; the
corner at vertex ``c`` lies between side ``c - 1`` (counterclockwise-previous)
and side ``c`` (counterclockwise-next).
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "TriangulationError",
    "SelfFoldedTriangle",
    "BadGluing",
    "WrongArcCount",
    "EulerMismatch",
    "IllegalFlip",
    "PathNotFound",
    "SurfaceSignature",
    "LabeledTriangulation",
    "MarkedTriangulation",
    "ExchangeMatrix",
    "Flip",
    "Permute",
    "GroupoidWord",
    "MappingClassLoop",
    "build_triangulation",
    "from_triples",
    "exchange_matrix",
    "flip",
    "permute",
    "mutate_exchange",
    "find_path",
    "verify_loop",
    "pentagon_word",
    "random_word",
    "random_loop",
]


class TriangulationError(ValueError):
    """Base class for invalid triangulation data or moves."""


class SelfFoldedTriangle(TriangulationError):
    pass


class BadGluing(TriangulationError):
    pass


class WrongArcCount(TriangulationError):
    pass


class EulerMismatch(TriangulationError):
    pass


class IllegalFlip(TriangulationError):
    pass


class PathNotFound(LookupError):
    """No groupoid word within the searched radius."""

    def __init__(self, radius: int):
        super().__init__(f"no path found within {radius} flips")
        self.radius = radius


@dataclass(frozen=True)
class SurfaceSignature:
    genus: int
    punctures: int

    def __post_init__(self):
        if self.genus < 0 or self.punctures < 1:
            raise ValueError(f"bad signature (g={self.genus}, n={self.punctures})")
        if self.euler_characteristic() >= 0:
            raise ValueError(
                f"surface (g={self.genus}, n={self.punctures}) has non-negative Euler characteristic"
            )
        if self.punctures == 1:
            warnings.warn("once-punctured surfaces are accepted but outside the n > 1 setting", stacklevel=3)

    def euler_characteristic(self) -> int:
        return 2 - 2 * self.genus - self.punctures

    def arc_count(self) -> int:
        return 6 * self.genus - 6 + 3 * self.punctures

    def triangle_count(self) -> int:
        return 4 * self.genus - 4 + 2 * self.punctures


def _rotate_min_first(tri: Sequence[int]) -> tuple[int, int, int]:
    r = min(range(3), key=lambda s: tri[s])
    return (tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3])


def _canonical(triples: Iterable[Sequence[int]]) -> tuple[tuple[int, int, int], ...]:
    return tuple(sorted(_rotate_min_first(t) for t in triples))


class LabeledTriangulation:
    """Immutable labeled ideal triangulation in canonical form.

    Triangles are rotated to put their smallest label first and then sorted,
    so two triangulations related by a label-preserving combinatorial
    isomorphism compare equal.
    """

    __slots__ = ("signature", "triangles", "_sides", "_corner_cycles")

    def __init__(self, signature: SurfaceSignature, triangles: Iterable[Sequence[int]]):
        self.signature = signature
        self.triangles = _canonical(triangles)
        self._sides = self._index_sides()
        self._corner_cycles = self._compute_corner_cycles()

    # -- construction helpers -------------------------------------------------
    def _index_sides(self) -> dict[int, tuple[tuple[int, int], tuple[int, int]]]:
        sides: dict[int, list[tuple[int, int]]] = {}
        for t, tri in enumerate(self.triangles):
            if len(set(tri)) != 3:
                raise SelfFoldedTriangle(f"triangle {tri} has a repeated side")
            for s, arc in enumerate(tri):
                sides.setdefault(arc, []).append((t, s))
        expected = self.signature.arc_count()
        if len(self.triangles) != self.signature.triangle_count():
            raise WrongArcCount(
                f"expected {self.signature.triangle_count()} triangles, got {len(self.triangles)}"
            )
        if sorted(sides) != list(range(1, expected + 1)):
            raise WrongArcCount(f"arc labels must be exactly 1..{expected}, got {sorted(sides)}")
        for arc, slots in sides.items():
            if len(slots) != 2:
                raise BadGluing(f"arc {arc} borders {len(slots)} sides instead of 2")
        return {arc: (slots[0], slots[1]) for arc, slots in sides.items()}

    def _compute_corner_cycles(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        parent = {(t, c): (t, c) for t in range(len(self.triangles)) for c in range(3)}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        for (t, s), (u, r) in self._sides.values():
            # orientation-reversing gluing of side s of t onto side r of u
            union((t, s), (u, (r + 1) % 3))
            union((t, (s + 1) % 3), (u, r))
        classes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for corner in parent:
            classes.setdefault(find(corner), []).append(corner)
        cycles = sorted(tuple(sorted(v)) for v in classes.values())
        chi = len(self.triangles) - len(self._sides) + len(cycles)
        if len(cycles) != self.signature.punctures or chi != 2 - 2 * self.signature.genus:
            raise EulerMismatch(
                f"{len(cycles)} corner cycles and Euler count {chi} do not match "
                f"(g={self.signature.genus}, n={self.signature.punctures})"
            )
        return tuple(cycles)

    # -- accessors ------------------------------------------------------------
    @property
    def arcs(self) -> range:
        return range(1, self.signature.arc_count() + 1)

    @property
    def corner_cycles(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Punctures as sorted tuples of (triangle, corner), ordered by their minimal corner."""
        return self._corner_cycles

    def sides_of(self, arc: int) -> tuple[tuple[int, int], tuple[int, int]]:
        return self._sides[arc]

    def corners(self) -> Iterator[tuple[int, int]]:
        """Yield (previous arc, next arc) for every corner, counterclockwise."""
        for a, b, c in self.triangles:
            yield (a, b)
            yield (b, c)
            yield (c, a)

    def gluing(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        return [self._sides[arc] for arc in self.arcs]

    def legal_flips(self) -> list[int]:
        out = []
        for k in self.arcs:
            try:
                flip(self, k)
            except IllegalFlip:
                continue
            out.append(k)
        return out

    # -- comparison -----------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, LabeledTriangulation):
            return NotImplemented
        return self.signature == other.signature and self.triangles == other.triangles

    def __hash__(self):
        return hash((self.signature, self.triangles))

    def __repr__(self):
        g, n = self.signature.genus, self.signature.punctures
        return f"LabeledTriangulation(g={g}, n={n}, triangles={list(self.triangles)})"

    # -- serialization --------------------------------------------------------
    def to_json(self) -> dict:
        gluing = [[list(a), list(b)] for a, b in self.gluing()]
        labels = {f"{a[0]},{a[1]}": arc for arc, (a, _) in zip(self.arcs, self.gluing())}
        return {
            "genus": self.signature.genus,
            "punctures": self.signature.punctures,
            "triangles": len(self.triangles),
            "gluing": gluing,
            "arc_labels": labels,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LabeledTriangulation":
        if "triples" in data:
            return from_triples(SurfaceSignature(data["genus"], data["punctures"]), data["triples"])
        labels = {}
        for key, label in data["arc_labels"].items():
            t, s = (int(v) for v in str(key).split(","))
            labels[(t, s)] = int(label)
        gluing = [((int(a[0]), int(a[1])), (int(b[0]), int(b[1]))) for a, b in data["gluing"]]
        return build_triangulation(
            SurfaceSignature(int(data["genus"]), int(data["punctures"])),
            int(data["triangles"]),
            gluing,
            labels,
        )


def build_triangulation(
    signature: SurfaceSignature,
    triangles: int,
    gluing: Iterable[tuple[tuple[int, int], tuple[int, int]]],
    labels: Mapping[tuple[int, int], int],
) -> LabeledTriangulation:
    """Validate side-slot gluing data and return the canonical triangulation.

    ``labels`` maps one side slot of each glued pair (either one) to its arc label.
    """
    partner: dict[tuple[int, int], tuple[int, int]] = {}
    for a, b in gluing:
        a, b = tuple(a), tuple(b)
        for slot in (a, b):
            if not (0 <= slot[0] < triangles and 0 <= slot[1] < 3):
                raise BadGluing(f"side slot {slot} out of range")
        if a == b:
            raise BadGluing(f"side slot {a} glued to itself")
        if a in partner or b in partner:
            raise BadGluing(f"side slot glued twice in pair {a}-{b}")
        partner[a], partner[b] = b, a
    if len(partner) != 3 * triangles:
        raise BadGluing(f"{3 * triangles - len(partner)} side slots left unglued")
    if len(partner) // 2 != signature.arc_count():
        raise WrongArcCount(f"expected {signature.arc_count()} arcs, got {len(partner) // 2}")
    if triangles != signature.triangle_count():
        raise WrongArcCount(f"expected {signature.triangle_count()} triangles, got {triangles}")
    for a, b in partner.items():
        if a[0] == b[0]:
            raise SelfFoldedTriangle(f"triangle {a[0]} has two sides on one arc")

    arc_of: dict[tuple[int, int], int] = {}
    for slot, label in labels.items():
        slot = tuple(slot)
        if slot not in partner:
            raise BadGluing(f"label given for unknown side slot {slot}")
        for s in (slot, partner[slot]):
            if s in arc_of and arc_of[s] != label:
                raise BadGluing(f"conflicting labels on arc through {slot}")
            arc_of[s] = int(label)
    if len(arc_of) != len(partner):
        raise BadGluing("some arcs are unlabeled")
    if sorted(set(arc_of.values())) != list(range(1, signature.arc_count() + 1)) or len(
        set(arc_of.values())
    ) * 2 != len(arc_of):
        raise WrongArcCount("arc labels must be a bijection onto 1..6g-6+3n")
    triples = [tuple(arc_of[(t, s)] for s in range(3)) for t in range(triangles)]
    return LabeledTriangulation(signature, triples)


def from_triples(signature: SurfaceSignature, triples: Iterable[Sequence[int]]) -> LabeledTriangulation:
    """Build from counterclockwise arc-label triples, one per triangle."""
    return LabeledTriangulation(signature, [tuple(int(a) for a in t) for t in triples])


# -- exchange matrix ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExchangeMatrix:
    """Skew-symmetric ``eps`` and valences ``valences[i-1, p]`` of arc i at puncture p."""

    eps: np.ndarray
    valences: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ExchangeMatrix):
            return NotImplemented
        return np.array_equal(self.eps, other.eps) and np.array_equal(self.valences, other.valences)


def exchange_matrix(T: LabeledTriangulation) -> ExchangeMatrix:
    """Corner-count exchange matrix eps_ij = a_ij - a_ji and per-puncture valences.

    a_ij counts corners whose counterclockwise-previous side lies on arc i and
    whose counterclockwise-next side lies on arc j. Flipping this convention
    negates eps.
    """
    N = T.signature.arc_count()
    a = np.zeros((N, N), dtype=np.int64)
    for i, j in T.corners():
        a[i - 1, j - 1] += 1
    eps = a - a.T
    val = np.zeros((N, T.signature.punctures), dtype=np.int64)
    for p, cycle in enumerate(T.corner_cycles):
        for t, c in cycle:
            prev_arc = T.triangles[t][(c - 1) % 3]
            val[prev_arc - 1, p] += 1
    return ExchangeMatrix(eps, val)


def _pos(a):
    return (a + abs(a)) // 2


def mutate_exchange(eps: np.ndarray, k: int) -> np.ndarray:
    """Matrix mutation at arc ``k`` (1-based label)."""
    e = np.asarray(eps, dtype=np.int64)
    kk = k - 1
    col = e[:, kk]
    row = e[kk, :]
    out = e + np.outer(_pos(col), _pos(row)) - np.outer(_pos(-col), _pos(-row))
    out[kk, :] = -e[kk, :]
    out[:, kk] = -e[:, kk]
    return out


# -- moves ---------------------------------------------------------------------


def _quadrilateral(T: LabeledTriangulation, k: int) -> tuple[int, int, int, int, int, int]:
    """Return (t1, t2, a, b, c, d) with triangles (k, a, b) and (k, c, d)."""
    if k not in T.arcs:
        raise IllegalFlip(f"no arc labeled {k}")
    (t1, s1), (t2, s2) = T.sides_of(k)
    if t1 == t2:
        raise IllegalFlip(f"arc {k} borders triangle {t1} twice")
    x, y = T.triangles[t1], T.triangles[t2]
    a, b = x[(s1 + 1) % 3], x[(s1 + 2) % 3]
    c, d = y[(s2 + 1) % 3], y[(s2 + 2) % 3]
    return t1, t2, a, b, c, d


def flip(T: LabeledTriangulation, k: int) -> LabeledTriangulation:
    """Replace arc ``k`` by the other diagonal of its quadrilateral; the new arc keeps label k."""
    t1, t2, a, b, c, d = _quadrilateral(T, k)
    if b == c or d == a:
        raise IllegalFlip(f"flip at {k} would create a self-folded triangle")
    rest = [tri for t, tri in enumerate(T.triangles) if t not in (t1, t2)]
    return LabeledTriangulation(T.signature, rest + [(k, b, c), (k, d, a)])


def _as_perm(sigma: Union[Mapping[int, int], Sequence[int]], arcs: range) -> dict[int, int]:
    if isinstance(sigma, Mapping):
        perm = {i: int(sigma.get(i, i)) for i in arcs}
    else:
        perm = {i: int(s) for i, s in zip(arcs, sigma)}
    if sorted(perm.values()) != list(arcs):
        raise ValueError(f"{dict(sigma) if isinstance(sigma, Mapping) else sigma} is not a permutation of {list(arcs)}")
    return perm


def permute(T: LabeledTriangulation, sigma: Union[Mapping[int, int], Sequence[int]]) -> LabeledTriangulation:
    """Relabel: the arc labeled i becomes labeled sigma(i)."""
    perm = _as_perm(sigma, T.arcs)
    return LabeledTriangulation(T.signature, [tuple(perm[a] for a in tri) for tri in T.triangles])


# -- marked (isotopy-tracking) triangulations -----------------------------------


@dataclass(frozen=True)
class MarkedTriangulation:
    """A triangulation together with generic lambda lengths of its arcs.

    Lambda lengths transform by the Ptolemy relation under flips, and distinct
    arcs (up to isotopy) carry distinct values for generic initial data. Two
    marked triangulations reached from a common start are therefore the same
    object up to isotopy exactly when their lengths agree, which is finer
    than combinatorial equality (that only sees the surface up to mapping
    classes).
    """

    triangulation: LabeledTriangulation
    lengths: tuple[Fraction, ...]

    @classmethod
    def generic(cls, T: LabeledTriangulation, rng: np.random.Generator) -> "MarkedTriangulation":
        vals = rng.choice(np.arange(10**6, 10**7), size=T.signature.arc_count(), replace=False)
        return cls(T, tuple(Fraction(int(v)) for v in vals))

    def length(self, arc: int) -> Fraction:
        return self.lengths[arc - 1]

    def flip(self, k: int) -> "MarkedTriangulation":
        _, _, a, b, c, d = _quadrilateral(self.triangulation, k)
        new_T = flip(self.triangulation, k)
        lam = list(self.lengths)
        lam[k - 1] = (self.length(a) * self.length(c) + self.length(b) * self.length(d)) / self.length(k)
        return MarkedTriangulation(new_T, tuple(lam))

    def permute(self, sigma) -> "MarkedTriangulation":
        perm = _as_perm(sigma, self.triangulation.arcs)
        lam = [Fraction(0)] * len(self.lengths)
        for i, j in perm.items():
            lam[j - 1] = self.lengths[i - 1]
        return MarkedTriangulation(permute(self.triangulation, perm), tuple(lam))

    def isotopy_key(self) -> frozenset:
        return frozenset(self.lengths)


# -- groupoid words --------------------------------------------------------------


@dataclass(frozen=True)
class Flip:
    arc: int

    def to_json(self):
        return {"flip": self.arc}


@dataclass(frozen=True)
class Permute:
    """Label permutation stored as sorted (i, sigma(i)) pairs for non-fixed i."""

    pairs: tuple[tuple[int, int], ...]

    @classmethod
    def of(cls, sigma: Mapping[int, int]) -> "Permute":
        return cls(tuple(sorted((int(i), int(j)) for i, j in sigma.items() if i != j)))

    @classmethod
    def from_cycles(cls, cycles: Sequence[Sequence[int]]) -> "Permute":
        sigma: dict[int, int] = {}
        for cyc in cycles:
            for a, b in zip(cyc, list(cyc[1:]) + [cyc[0]]):
                if a in sigma:
                    raise ValueError(f"label {a} repeated in cycle notation")
                sigma[int(a)] = int(b)
        return cls.of(sigma)

    def mapping(self) -> dict[int, int]:
        return dict(self.pairs)

    def inverse(self) -> "Permute":
        return Permute(tuple(sorted((j, i) for i, j in self.pairs)))

    def is_identity(self) -> bool:
        return not self.pairs

    def cycles(self) -> list[list[int]]:
        m = self.mapping()
        seen, out = set(), []
        for start in sorted(m):
            if start in seen:
                continue
            cyc, x = [], start
            while x not in seen:
                seen.add(x)
                cyc.append(x)
                x = m[x]
            out.append(cyc)
        return out

    def to_json(self):
        return {"permute": self.cycles()}


Move = Union[Flip, Permute]


def _apply(state, move: Move):
    if isinstance(move, Flip):
        return state.flip(move.arc) if isinstance(state, MarkedTriangulation) else flip(state, move.arc)
    return state.permute(move.mapping()) if isinstance(state, MarkedTriangulation) else permute(state, move.mapping())


@dataclass(frozen=True)
class GroupoidWord:
    """A sequence of flips and label permutations starting at ``start``.

    Construction checks that every flip is legal where it is applied.
    """

    start: LabeledTriangulation
    moves: tuple = ()
    _trail: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple(self.moves))
        trail = [self.start]
        for m in self.moves:
            trail.append(_apply(trail[-1], m))
        object.__setattr__(self, "_trail", tuple(trail))

    def triangulations(self) -> tuple[LabeledTriangulation, ...]:
        return self._trail

    def end(self) -> LabeledTriangulation:
        return self._trail[-1]

    def __len__(self):
        return len(self.moves)

    def then(self, other: "GroupoidWord | Sequence[Move]") -> "GroupoidWord":
        moves = other.moves if isinstance(other, GroupoidWord) else tuple(other)
        return GroupoidWord(self.start, self.moves + tuple(moves))

    def inverse(self) -> "GroupoidWord":
        inv = [m if isinstance(m, Flip) else m.inverse() for m in reversed(self.moves)]
        return GroupoidWord(self.end(), inv)

    def simplified(self) -> "GroupoidWord":
        """Cancel adjacent inverse pairs and merge consecutive permutations."""
        out: list[Move] = []
        for m in self.moves:
            if isinstance(m, Permute):
                if m.is_identity():
                    continue
                if out and isinstance(out[-1], Permute):
                    prev = out.pop().mapping()
                    cur = m.mapping()
                    merged = Permute.of({i: cur.get(prev.get(i, i), prev.get(i, i)) for i in set(prev) | set(cur)})
                    if not merged.is_identity():
                        out.append(merged)
                    continue
            elif out and out[-1] == m:
                out.pop()
                continue
            out.append(m)
        return GroupoidWord(self.start, out)

    def marked_trail(self, start: MarkedTriangulation) -> list[MarkedTriangulation]:
        if start.triangulation != self.start:
            raise ValueError("marking does not match the word's start")
        trail = [start]
        for m in self.moves:
            trail.append(_apply(trail[-1], m))
        return trail

    def to_json(self) -> dict:
        return {"start": self.start.to_json(), "moves": [m.to_json() for m in self.moves]}

    @classmethod
    def from_json(cls, data: Mapping, start: LabeledTriangulation | None = None) -> "GroupoidWord":
        if start is None:
            start = LabeledTriangulation.from_json(data["start"])
        moves: list[Move] = []
        for m in data["moves"]:
            if "flip" in m:
                moves.append(Flip(int(m["flip"])))
            elif "permute" in m:
                p = m["permute"]
                if p and isinstance(p[0], int):
                    p = [p]
                moves.append(Permute.from_cycles(p))
            else:
                raise ValueError(f"unknown move {m}")
        return cls(start, moves)


def pentagon_word(T: LabeledTriangulation, i: int, j: int) -> GroupoidWord:
    """Five alternating flips starting at i, then the (i j) relabeling."""
    return GroupoidWord(T, [Flip(i), Flip(j), Flip(i), Flip(j), Flip(i), Permute.of({i: j, j: i})])


def random_word(T: LabeledTriangulation, length: int, rng: np.random.Generator) -> GroupoidWord:
    """Random walk of legal flips, never immediately undoing the previous flip."""
    moves: list[Move] = []
    cur = T
    for _ in range(length):
        options = [k for k in cur.legal_flips() if not (moves and moves[-1] == Flip(k))]
        if not options:
            break
        k = int(rng.choice(options))
        moves.append(Flip(k))
        cur = flip(cur, k)
    return GroupoidWord(T, moves)


# -- mapping class loops -----------------------------------------------------------


@dataclass(frozen=True)
class MappingClassLoop:
    """A word whose end is identified with its start by ``closing_iso``.

    ``closing_iso`` maps side slots (triangle, side) of ``word.end()`` to side
    slots of ``word.start()``; ``None`` stands for the identity on canonical
    positions.
    """

    word: GroupoidWord
    closing_iso: Mapping[tuple[int, int], tuple[int, int]] | None = None

    @property
    def start(self) -> LabeledTriangulation:
        return self.word.start

    def iso(self) -> dict[tuple[int, int], tuple[int, int]]:
        if self.closing_iso is None:
            return {(t, s): (t, s) for t in range(len(self.start.triangles)) for s in range(3)}
        return {tuple(k): tuple(v) for k, v in self.closing_iso.items()}

    def then(self, other: "MappingClassLoop") -> "MappingClassLoop":
        """Concatenate words (the loop for h1 followed by the loop for h2)."""
        if other.start != self.start:
            raise ValueError("loops based at different triangulations")
        return MappingClassLoop(self.word.then(other.word))

    def inverse(self) -> "MappingClassLoop":
        return MappingClassLoop(self.word.inverse())

    def to_json(self) -> dict:
        iso = None
        if self.closing_iso is not None:
            iso = [[list(k), list(v)] for k, v in sorted(self.iso().items())]
        return {"word": self.word.to_json(), "closing_iso": iso}

    @classmethod
    def from_json(cls, data: Mapping) -> "MappingClassLoop":
        iso = data.get("closing_iso")
        if iso is not None:
            iso = {(int(a[0]), int(a[1])): (int(b[0]), int(b[1])) for a, b in iso}
        return cls(GroupoidWord.from_json(data["word"]), iso)


def verify_loop(loop: MappingClassLoop) -> bool:
    """True iff closing_iso is a label-preserving isomorphism word.end() -> word.start()."""
    A, B = loop.word.end(), loop.start
    iso = loop.iso()
    slots_a = {(t, s) for t in range(len(A.triangles)) for s in range(3)}
    slots_b = {(t, s) for t in range(len(B.triangles)) for s in range(3)}
    if set(iso) != slots_a or set(iso.values()) != slots_b:
        return False
    for t in range(len(A.triangles)):
        images = [iso[(t, s)] for s in range(3)]
        u = images[0][0]
        if any(img[0] != u for img in images):
            return False
        # counterclockwise order must be preserved (a rotation)
        shift = (images[0][1] - 0) % 3
        if any(images[s][1] != (s + shift) % 3 for s in range(3)):
            return False
        for s in range(3):
            if A.triangles[t][s] != B.triangles[u][images[s][1]]:
                return False
    # label preservation together with the ccw triple structure forces the gluing to match
    for arc in A.arcs:
        mapped = {iso[slot] for slot in A.sides_of(arc)}
        if mapped != set(B.sides_of(arc)):
            return False
    return True


def random_loop(T: LabeledTriangulation, length: int, rng: np.random.Generator, max_tries: int = 100) -> MappingClassLoop:
    """A random walk closed up by the shortest path back to T, isotopically nontrivial."""
    probe = MarkedTriangulation.generic(T, rng)
    for _ in range(max_tries):
        w = random_word(T, length, rng)
        loop = w.then(find_path(w.end(), T, 2 * length + 4))
        if loop.marked_trail(probe)[-1].isotopy_key() != probe.isotopy_key():
            return MappingClassLoop(loop)
    raise PathNotFound(length)


# -- path search -------------------------------------------------------------------


def _relabel_encoding(T: LabeledTriangulation, t0: int, s0: int):
    """Breadth-first relabeling from a starting side; returns (encoding, old->new)."""
    new_label: dict[int, int] = {}
    rotated: dict[int, int] = {t0: s0}
    order = [t0]
    queue = deque([t0])
    while queue:
        t = queue.popleft()
        r = rotated[t]
        tri = T.triangles[t]
        for step in range(3):
            s = (r + step) % 3
            arc = tri[s]
            if arc not in new_label:
                new_label[arc] = len(new_label) + 1
            (ta, sa), (tb, sb) = T.sides_of(arc)
            u, su = (tb, sb) if (ta, sa) == (t, s) else (ta, sa)
            if u not in rotated:
                rotated[u] = su
                order.append(u)
                queue.append(u)
    enc = tuple(tuple(new_label[T.triangles[t][(rotated[t] + i) % 3]] for i in range(3)) for t in order)
    return enc, new_label


def _shape_key(T: LabeledTriangulation):
    """Label-independent canonical form with one canonical relabeling."""
    best = None
    for t in range(len(T.triangles)):
        for s in range(3):
            enc, lab = _relabel_encoding(T, t, s)
            if best is None or enc < best[0]:
                best = (enc, lab)
    return best


def _matching_permutation(X, Y) -> dict[int, int] | None:
    """A relabeling sending X to Y exactly, if one exists."""
    if isinstance(X, MarkedTriangulation):
        where = {v: j for j, v in enumerate(Y.lengths, start=1)}
        if len(where) != len(Y.lengths):
            raise ValueError("lambda lengths collide; choose another marking")
        try:
            sigma = {i: where[v] for i, v in enumerate(X.lengths, start=1)}
        except KeyError:
            return None
        if X.permute(sigma).triangulation != Y.triangulation:
            raise ValueError("lambda lengths match but triangulations differ; marking not generic")
        return sigma
    kx, lx = _shape_key(X)
    ky, ly = _shape_key(Y)
    if kx != ky:
        return None
    inv_y = {v: k for k, v in ly.items()}
    sigma = {i: inv_y[lx[i]] for i in X.arcs}
    if permute(X, sigma) != Y:  # pragma: no cover - canonical labeling is exact
        return None
    return sigma


def _key(state):
    if isinstance(state, MarkedTriangulation):
        return state.isotopy_key()
    return _shape_key(state)[0]


def _arcs_of(state):
    return (state.triangulation if isinstance(state, MarkedTriangulation) else state).arcs


def _neighbors(state):
    T = state.triangulation if isinstance(state, MarkedTriangulation) else state
    for k in T.arcs:
        try:
            yield k, _apply(state, Flip(k))
        except IllegalFlip:
            continue


def find_path(A, B, max_depth: int) -> GroupoidWord:
    """Shortest flip sequence plus one final relabeling from A to B.

    With plain triangulations the search runs in the flip graph modulo the
    mapping class group (endpoints matched combinatorially). With
    :class:`MarkedTriangulation` endpoints it runs in the flip graph proper
    and the endpoints must agree up to isotopy. Raises :class:`PathNotFound`.
    """
    start = A.triangulation if isinstance(A, MarkedTriangulation) else A
    if type(A) is not type(B):
        raise TypeError("both endpoints must be marked or both unmarked")
    if start.signature != (B.triangulation if isinstance(B, MarkedTriangulation) else B).signature:
        raise ValueError("endpoints live on different surfaces")

    # frontier maps shape key -> list of (state, moves)
    fwd = {_key(A): [(A, ())]}
    bwd = {_key(B): [(B, ())]}
    fwd_front, bwd_front = dict(fwd), dict(bwd)
    depth_f = depth_b = 0

    def meet():
        found = []
        for key, entries in fwd.items():
            if key not in bwd:
                continue
            for xa, ma in entries:
                for xb, mb in bwd[key]:
                    sigma = _matching_permutation(xa, xb)
                    if sigma is None:
                        continue
                    p = Permute.of(sigma)
                    moved = len(p.pairs)
                    found.append((len(ma) + len(mb), moved, ma, p, mb))
        if not found:
            return None
        found.sort(key=lambda f: (f[0], f[1], [m.arc for m in f[2]], [m.arc for m in reversed(f[4])]))
        _, _, ma, p, mb = found[0]
        moves = list(ma) + ([] if p.is_identity() else [p]) + list(reversed(mb))
        return GroupoidWord(start, moves)

    while True:
        w = meet()
        if w is not None:
            return w
        if depth_f + depth_b >= max_depth:
            raise PathNotFound(max_depth)
        grow_fwd = depth_f <= depth_b
        front, seen = (fwd_front, fwd) if grow_fwd else (bwd_front, bwd)
        new_front: dict = {}
        for entries in front.values():
            for state, moves in entries:
                for k, nxt in _neighbors(state):
                    key = _key(nxt)
                    bucket = seen.setdefault(key, [])
                    if any(_same(nxt, other) for other, _ in bucket):
                        continue
                    entry = (nxt, moves + (Flip(k),))
                    bucket.append(entry)
                    new_front.setdefault(key, []).append(entry)
        if grow_fwd:
            fwd_front, depth_f = new_front, depth_f + 1
        else:
            bwd_front, depth_b = new_front, depth_b + 1
        if not new_front and not (fwd_front or bwd_front):
            raise PathNotFound(depth_f + depth_b)


def _same(x, y) -> bool:
    if isinstance(x, MarkedTriangulation):
        return x.lengths == y.lengths
    return x == y
