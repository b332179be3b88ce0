"""Exact first-order operators on L^2(R^V) and their linear symmetries.

An operator ``sum_j pos_j * s_j + sum_j mom_j * (-pi i d/ds_j) + pi i * scalar``
is stored by its rational coefficients. The formal unit pi*i never becomes a
float, so commutation relations and constraint equations are checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np
import sympy

from .triangulation import ExchangeMatrix

__all__ = [
    "OperatorCoeffs",
    "EchelonData",
    "LinearSymplecticMap",
    "RankDeficient",
    "commutator",
    "check_weyl_consistency",
    "reducible_solution",
    "echelon_reduce",
    "irreducible_solution",
    "monomial_map",
    "permutation_map",
    "identity_map",
    "operators_to_json",
    "frac_str",
    "heisenberg_violations",
    "constraint_sums",
    "constraint_violations",
]


class RankDeficient(ValueError):
    pass


def _fr(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, sympy.Rational):
        return Fraction(int(v.p), int(v.q))
    if isinstance(v, (np.integer, int)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"cannot convert {v!r} exactly")


def frac_str(v: Fraction) -> str:
    v = _fr(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class OperatorCoeffs:
    variables: tuple
    pos: tuple
    mom: tuple
    scalar: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "pos", tuple(_fr(v) for v in self.pos))
        object.__setattr__(self, "mom", tuple(_fr(v) for v in self.mom))
        object.__setattr__(self, "scalar", _fr(self.scalar))
        if not (len(self.pos) == len(self.mom) == len(self.variables)):
            raise ValueError("coefficient vectors must match the variable list")

    @classmethod
    def zero(cls, variables: Sequence[Hashable]) -> "OperatorCoeffs":
        n = len(variables)
        return cls(tuple(variables), (0,) * n, (0,) * n)

    @classmethod
    def position(cls, variables, v) -> "OperatorCoeffs":
        """Multiplication by the coordinate ``v``."""
        z = [0] * len(variables)
        z[list(variables).index(v)] = 1
        return cls(tuple(variables), z, [0] * len(variables))

    @classmethod
    def momentum(cls, variables, v) -> "OperatorCoeffs":
        """The operator -pi i d/dv."""
        z = [0] * len(variables)
        z[list(variables).index(v)] = 1
        return cls(tuple(variables), [0] * len(variables), z)

    def _check(self, other: "OperatorCoeffs"):
        if self.variables != other.variables:
            raise ValueError("operators act on different variable sets")

    def __add__(self, other: "OperatorCoeffs") -> "OperatorCoeffs":
        self._check(other)
        return OperatorCoeffs(
            self.variables,
            [a + b for a, b in zip(self.pos, other.pos)],
            [a + b for a, b in zip(self.mom, other.mom)],
            self.scalar + other.scalar,
        )

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "OperatorCoeffs":
        c = _fr(c)
        return OperatorCoeffs(self.variables, [c * a for a in self.pos], [c * a for a in self.mom], c * self.scalar)

    def is_zero(self) -> bool:
        return not any(self.pos) and not any(self.mom) and self.scalar == 0

    def is_self_adjoint(self) -> bool:
        return self.scalar == 0

    def to_json(self) -> dict:
        return {"pos": [frac_str(v) for v in self.pos], "mom": [frac_str(v) for v in self.mom]}


def commutator(A: OperatorCoeffs, B: OperatorCoeffs) -> Fraction:
    """Rational r with [A, B] = pi i r, from [s_j, -pi i d/ds_k] = pi i delta_jk."""
    A._check(B)
    return sum((a * d - b * c for a, b, c, d in zip(A.pos, A.mom, B.pos, B.mom)), Fraction(0))


def check_weyl_consistency(A: OperatorCoeffs, B: OperatorCoeffs) -> Fraction:
    """Commutator constant in units of pi: [A, B] = i c with c = pi * r; returns r.

    Then exp(i a A) exp(i b B) = exp(-i c a b) exp(i b B) exp(i a A).
    """
    return commutator(A, B)


def reducible_solution(eps) -> dict[int, tuple[OperatorCoeffs, OperatorCoeffs]]:
    """x_i = -pi i d/dt_i and y_i = sum_j eps_ij t_j on variables t_1..t_N."""
    e = np.asarray(eps.eps if isinstance(eps, ExchangeMatrix) else eps, dtype=object)
    N = e.shape[0]
    var = tuple(range(1, N + 1))
    out = {}
    for i in var:
        x = OperatorCoeffs.momentum(var, i)
        y = OperatorCoeffs(var, [e[i - 1, j] for j in range(N)], [0] * N)
        out[i] = (x, y)
    return out


@dataclass(frozen=True)
class EchelonData:
    pivots: tuple  # arc labels i_1 < ... < i_n
    reduced: tuple  # rows indexed by arc (1-based position), columns by pivot index
    ring_delta: tuple

    def w(self, arc: int, j: int) -> Fraction:
        return self.reduced[arc - 1][j]


def echelon_reduce(valences) -> EchelonData:
    """Column-reduced echelon form of the valence matrix with earliest pivot rows."""
    V = sympy.Matrix(np.asarray(valences, dtype=object).tolist())
    N, n = V.shape
    if V.rank() != n:
        raise RankDeficient(f"valence matrix has rank {V.rank()} < {n}")
    pivots: list[int] = []
    for i in range(N):
        if sympy.Matrix([V.row(r) for r in pivots + [i]]).rank() == len(pivots) + 1:
            pivots.append(i)
        if len(pivots) == n:
            break
    B = sympy.Matrix([V.row(r) for r in pivots])
    W = V * B.inv()
    reduced = tuple(tuple(_fr(W[i, j]) for j in range(n)) for i in range(N))
    piv = tuple(p + 1 for p in pivots)
    ring = tuple(i for i in range(1, N + 1) if i not in piv)
    return EchelonData(piv, reduced, ring)


def irreducible_solution(eps, ech: EchelonData) -> dict[int, tuple[OperatorCoeffs, OperatorCoeffs]]:
    """Operators on L^2 of the non-pivot arcs satisfying the quantum constraints."""
    e = np.asarray(eps.eps if isinstance(eps, ExchangeMatrix) else eps, dtype=object)
    N = e.shape[0]
    var = ech.ring_delta
    out = {}
    for i in range(1, N + 1):
        if i in ech.pivots:
            j = ech.pivots.index(i)
            x = OperatorCoeffs(var, [0] * len(var), [-ech.w(k, j) for k in var])
        else:
            x = OperatorCoeffs.momentum(var, i)
        y = OperatorCoeffs(var, [e[i - 1, k - 1] for k in var], [0] * len(var))
        out[i] = (x, y)
    return out


def heisenberg_violations(ops: Mapping[int, tuple[OperatorCoeffs, OperatorCoeffs]], eps) -> list[dict]:
    """Pairs breaking [x_i, y_j] = pi i eps_ij or [x_i, x_j] = [y_i, y_j] = 0."""
    e = np.asarray(eps.eps if isinstance(eps, ExchangeMatrix) else eps, dtype=object)
    bad = []
    for i, (xi, yi) in sorted(ops.items()):
        for j, (xj, yj) in sorted(ops.items()):
            for kind, r, want in (
                ("xy", commutator(xi, yj), _fr(e[i - 1, j - 1])),
                ("xx", commutator(xi, xj), Fraction(0)),
                ("yy", commutator(yi, yj), Fraction(0)),
            ):
                if r != want:
                    bad.append({"relation": kind, "i": i, "j": j, "got": frac_str(r), "want": frac_str(want)})
    return bad


def constraint_sums(ops: Mapping[int, tuple[OperatorCoeffs, OperatorCoeffs]], valences) -> list[tuple[OperatorCoeffs, OperatorCoeffs]]:
    """(sum_i v_ip x_i, sum_i v_ip y_i) for each puncture p."""
    V = np.asarray(valences, dtype=object)
    out = []
    for p in range(V.shape[1]):
        xs = ys = None
        for i, (x, y) in sorted(ops.items()):
            v = V[i - 1, p]
            xs = x.scale(v) if xs is None else xs + x.scale(v)
            ys = y.scale(v) if ys is None else ys + y.scale(v)
        out.append((xs, ys))
    return out


def constraint_violations(ops, valences) -> list[dict]:
    bad = []
    for p, (xs, ys) in enumerate(constraint_sums(ops, valences), start=1):
        if not xs.is_zero():
            bad.append({"constraint": "x", "puncture": p, "sum": xs.to_json()})
        if not ys.is_zero():
            bad.append({"constraint": "y", "puncture": p, "sum": ys.to_json()})
    return bad


def operators_to_json(ops: Mapping[int, tuple[OperatorCoeffs, OperatorCoeffs]]) -> dict:
    variables = next(iter(ops.values()))[0].variables if ops else ()
    body = {}
    for i, (x, y) in sorted(ops.items()):
        body[f"x_{i}"] = x.to_json()
        body[f"y_{i}"] = y.to_json()
    return {"variables": [f"s_{v}" for v in variables], "operators": body}


# -- linear maps -----------------------------------------------------------------


def _exact(a) -> np.ndarray:
    arr = np.asarray(a, dtype=object)
    return np.vectorize(_fr, otypes=[object])(arr) if arr.size else arr


@dataclass(frozen=True, eq=False)
class LinearSymplecticMap:
    """Linear coordinate change t_new = coords @ t_old, kept with its exact inverse.

    On operator coefficients it acts by pullback: positions by ``coords.T`` and
    momenta by ``inverse``. The induced map on (pos, mom) is therefore always
    symplectic; ``det`` is the determinant of the coordinate change.
    """

    coords: np.ndarray
    inverse: np.ndarray

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Block matrix on the coefficient space pos (+) mom."""
        n = self.dim
        z = np.full((n, n), Fraction(0), dtype=object)
        return np.block([[self.coords.T, z], [z, self.inverse]])

    @property
    def det(self) -> Fraction:
        return _fr(sympy.Matrix(self.coords.tolist()).det())

    def then(self, other: "LinearSymplecticMap") -> "LinearSymplecticMap":
        """Apply self first, then other."""
        return LinearSymplecticMap(other.coords.dot(self.coords), self.inverse.dot(other.inverse))

    def pullback(self, A: OperatorCoeffs) -> OperatorCoeffs:
        """Express an operator in the new coordinates in terms of the old ones."""
        pos = self.coords.T.dot(np.array(A.pos, dtype=object))
        mom = self.inverse.dot(np.array(A.mom, dtype=object))
        return OperatorCoeffs(A.variables, pos, mom, A.scalar)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.coords, np.eye(self.dim, dtype=int)))

    def preserves_form(self) -> bool:
        M = self.matrix
        n = self.dim
        J = np.zeros((2 * n, 2 * n), dtype=object)
        J[:n, n:] = np.eye(n, dtype=int)
        J[n:, :n] = -np.eye(n, dtype=int)
        return bool(np.array_equal(M.T.dot(J).dot(M), J))

    def __eq__(self, other):
        if not isinstance(other, LinearSymplecticMap):
            return NotImplemented
        return bool(np.array_equal(self.coords, other.coords))

    def to_json(self) -> list:
        return [[frac_str(v) for v in row] for row in self.coords]


def identity_map(n: int) -> LinearSymplecticMap:
    I = _exact(np.eye(n, dtype=int))
    return LinearSymplecticMap(I, I.copy())


def monomial_map(eps, k: int, sign: int = 1) -> LinearSymplecticMap:
    """Coordinate change of a flip at arc k.

    t'_k = -t_k + sum_j [-sign * eps_kj]_+ t_j, other coordinates fixed. The
    default sign=+1 is the standard choice; sign=-1 is the companion that
    differs from it by the shear t_k -> t_k - sum_j eps_kj t_j. Both are
    involutions with determinant -1.
    """
    e = np.asarray(eps.eps if isinstance(eps, ExchangeMatrix) else eps, dtype=np.int64)
    n = e.shape[0]
    M = np.eye(n, dtype=np.int64)
    row = np.maximum(-sign * e[k - 1], 0)
    row[k - 1] = -1
    M[k - 1] = row
    M = _exact(M)
    return LinearSymplecticMap(M, M.copy())


def permutation_map(sigma: Mapping[int, int] | Sequence[int], n: int | None = None) -> LinearSymplecticMap:
    """Relabeling coordinates: t'_{sigma(i)} = t_i."""
    if not isinstance(sigma, Mapping):
        sigma = {i + 1: int(s) for i, s in enumerate(sigma)}
    n = n or max(max(sigma, default=0), max(sigma.values(), default=0))
    P = np.zeros((n, n), dtype=np.int64)
    for i in range(1, n + 1):
        P[sigma.get(i, i) - 1, i - 1] = 1
    if not np.array_equal(P.sum(axis=0), np.ones(n)) or not np.array_equal(P.sum(axis=1), np.ones(n)):
        raise ValueError("sigma is not a permutation")
    P = _exact(P)
    return LinearSymplecticMap(P, P.T.copy())
