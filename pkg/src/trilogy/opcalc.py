"""Functional calculus for first-order operators on sampled L^2(R^d), d = 1, 2.

Samples sit at t_j = -L + j * 2L/N on each axis. The discrete Fourier
transform diagonalizes -i d/dt with eigenvalue pi k / L on mode k, k taken in
numpy's FFT order. A momentum coefficient b of the operator -pi i d/dt
therefore acts as pi * b * p on the Fourier side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .heisenberg import OperatorCoeffs, check_weyl_consistency, commutator
from .qdilog import QDParams, F_kernel_array, RealPhiTable

__all__ = [
    "Grid",
    "GridState",
    "GridOperatorPlan",
    "Multiplier",
    "FourierMultiplier",
    "ChirpConjugated",
    "Composite",
    "Pullback",
    "Rotation",
    "SupportOverflow",
    "AliasRisk",
    "NonCommuting",
    "UnsupportedShape",
    "RotationResamplingError",
    "ResidualReport",
    "gaussian_state",
    "test_states",
    "apply_weyl",
    "plan_F",
    "apply_F",
    "apply_linear_pullback",
    "rotate",
    "verify_phi_pentagon",
    "verify_F_pentagon",
    "pentagon_operators",
    "relative_residual",
    "PHI_BOOSTS",
    "F_BOOSTS",
    "refinement_study",
    "refinement_csv",
    "strictly_decreasing",
]


class SupportOverflow(RuntimeError):
    pass


class AliasRisk(RuntimeError):
    pass


class NonCommuting(ValueError):
    pass


class UnsupportedShape(ValueError):
    pass


class RotationResamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or 2 is supported")
        if self.N < 64 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 64, got {self.N}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return 2 * self.L / self.N

    @property
    def t(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @property
    def p(self) -> np.ndarray:
        """Eigenvalues of -i d/dt in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.N, self.dx)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    def axis_values(self, axis: int, momentum: bool = False) -> np.ndarray:
        """Coordinate (or momentum) along ``axis``, shaped to broadcast over the grid."""
        v = self.p if momentum else self.t
        shape = [1] * self.d
        shape[axis] = self.N
        return v.reshape(shape)


@dataclass(frozen=True, eq=False)
class GridState:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx**self.grid.d))

    def inner(self, other: "GridState") -> complex:
        return complex(np.vdot(self.values, other.values) * self.grid.dx**self.grid.d)

    def with_values(self, values: np.ndarray) -> "GridState":
        return GridState(values, self.grid)

    def boundary_mass(self, band: float = 0.05) -> float:
        """Fraction of the squared norm within ``band * L`` of the domain edge."""
        g = self.grid
        edge = np.abs(g.t) > (1 - band) * g.L
        w = np.abs(self.values) ** 2
        total = w.sum()
        if total == 0:
            return 0.0
        mask = np.zeros(g.shape, dtype=bool)
        for ax in range(g.d):
            shape = [1] * g.d
            shape[ax] = g.N
            mask |= np.broadcast_to(edge.reshape(shape), g.shape)
        return float(w[mask].sum() / total)


def relative_residual(a: GridState, b: GridState, ref: GridState) -> float:
    return GridState(a.values - b.values, a.grid).norm() / ref.norm()


def gaussian_state(grid: Grid, center, width, boost) -> GridState:
    """Normalized product Gaussian exp(-(t-c)^2 / (2 w^2) + i k t)."""
    center, width, boost = (np.broadcast_to(np.asarray(v, dtype=float), (grid.d,)) for v in (center, width, boost))
    vals = np.ones(grid.shape, dtype=complex)
    for ax in range(grid.d):
        t = grid.axis_values(ax)
        vals = vals * np.exp(-((t - center[ax]) ** 2) / (2 * width[ax] ** 2) + 1j * boost[ax] * t)
    s = GridState(vals, grid)
    return s.with_values(vals / s.norm())


# Boost ranges used by the pentagon checks. Each points the state toward the
# side where the dilogarithm argument is negative, which keeps mass away from
# the periodic boundary at L = 12.
PHI_BOOSTS = (0.5, 1.0)
F_BOOSTS = (-1.0, -0.5)


def test_states(
    grid: Grid,
    count: int = 5,
    seed: int = 0,
    widths: tuple[float, float] = (1.75, 2.0),
    boosts: tuple[float, float] = PHI_BOOSTS,
    boundary_tol: float = 1e-10,
) -> list[GridState]:
    """Centered Gaussians with random widths and momentum boosts per axis.

    The default ranges keep the pentagon residual at L = 12 dominated by the
    discretization rather than by mass wrapping around the periodic domain.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        s = gaussian_state(grid, np.zeros(grid.d), rng.uniform(*widths, grid.d), rng.uniform(*boosts, grid.d))
        if s.boundary_mass() > boundary_tol:
            raise SupportOverflow(f"test state has boundary mass {s.boundary_mass():.2e}")
        out.append(s)
    return out


# -- plans ------------------------------------------------------------------------------


class GridOperatorPlan:
    """A unitary (up to discretization error) acting on grid states."""

    def apply(self, psi: GridState) -> GridState:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, psi: GridState) -> GridState:
        return self.apply(psi)


@dataclass(eq=False)
class Multiplier(GridOperatorPlan):
    values: np.ndarray

    def apply(self, psi):
        return psi.with_values(psi.values * self.values)


@dataclass(eq=False)
class FourierMultiplier(GridOperatorPlan):
    """Transform ``axes`` to momentum space, multiply, transform back.

    ``values`` is indexed by momentum along ``axes`` and position along the rest.
    """

    axes: tuple
    values: np.ndarray

    def apply(self, psi):
        f = np.fft.fftn(psi.values, axes=self.axes)
        return psi.with_values(np.fft.ifftn(f * self.values, axes=self.axes))


@dataclass(eq=False)
class ChirpConjugated(GridOperatorPlan):
    """exp(i c Q^2) inner exp(-i c Q^2) with Q the coordinate along ``axis``."""

    c: float
    inner: GridOperatorPlan
    axis: int = 0

    def apply(self, psi):
        q = psi.grid.axis_values(self.axis)
        chirp = np.exp(1j * self.c * q**2)
        out = self.inner.apply(psi.with_values(psi.values / chirp))
        return out.with_values(out.values * chirp)


@dataclass(eq=False)
class Composite(GridOperatorPlan):
    """Apply ``plans`` in list order (first entry acts first)."""

    plans: list

    def apply(self, psi):
        for p in self.plans:
            psi = p.apply(psi)
        return psi


def _shear(psi: GridState, axis: int, along: int, c: float) -> GridState:
    """f(t) -> f(t + c t_along e_axis), exact for band-limited periodic data."""
    g = psi.grid
    phase = np.exp(1j * g.axis_values(axis, momentum=True) * c * g.axis_values(along))
    f = np.fft.fft(psi.values, axis=axis)
    return psi.with_values(np.fft.ifft(f * phase, axis=axis))


def _negate(psi: GridState, axis: int) -> GridState:
    """f(t) -> f(t with t_axis negated); exact on the symmetric periodic lattice."""
    idx = (-np.arange(psi.grid.N)) % psi.grid.N
    return psi.with_values(np.take(psi.values, idx, axis=axis))


def _elementary_factors(M: np.ndarray) -> list[tuple]:
    """Write an integer unimodular M as E_1 E_2 ... E_r with elementary E_i."""
    A = np.array(M, dtype=np.int64)
    n = A.shape[0]
    if round(abs(np.linalg.det(A))) != 1:
        raise UnsupportedShape("pullback matrix must be integer unimodular")
    inv_ops: list[tuple] = []  # G with G_s ... G_1 M = I, stored as inverses E_i = G_i^{-1}

    def row_add(i, j, q):
        A[i] -= q * A[j]
        inv_ops.append(("shear", i, j, int(q)))

    for col in range(n):
        for r in range(col + 1, n):
            while A[r, col] != 0:
                if A[col, col] == 0 or abs(A[r, col]) < abs(A[col, col]):
                    A[[col, r]] = A[[r, col]]
                    inv_ops.append(("swap", col, r))
                    continue
                row_add(r, col, int(A[r, col] / A[col, col]))
        if A[col, col] < 0:
            A[col] = -A[col]
            inv_ops.append(("negate", col))
    for col in range(n - 1, -1, -1):
        for r in range(col):
            if A[r, col]:
                row_add(r, col, A[r, col])
    assert np.array_equal(A, np.eye(n, dtype=np.int64))
    return inv_ops


def _elementary_matrix(op, n: int) -> np.ndarray:
    E = np.eye(n, dtype=np.int64)
    if op[0] == "shear":
        E[op[1], op[2]] = op[3]
    elif op[0] == "swap":
        E[[op[1], op[2]]] = E[[op[2], op[1]]]
    else:
        E[op[1], op[1]] = -1
    return E


@dataclass(eq=False)
class Pullback(GridOperatorPlan):
    """(U f)(t) = f(M t) for an integer unimodular matrix M."""

    matrix: np.ndarray
    ops: list = field(init=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        self.ops = _elementary_factors(self.matrix)

    def apply(self, psi):
        # U_{E1 E2 ... Er} = U_{Er} o ... o U_{E1}: apply E1 first
        for op in self.ops:
            if op[0] == "shear":
                psi = _shear(psi, op[1], op[2], op[3])
            elif op[0] == "swap":
                psi = psi.with_values(np.swapaxes(psi.values, op[1], op[2]).copy())
            else:
                psi = _negate(psi, op[1])
        return psi


@dataclass(eq=False)
class Rotation(GridOperatorPlan):
    """(R f)(s) = f(R_theta s) on a 2-d grid via three Fourier shears."""

    theta: float

    def apply(self, psi):
        if psi.grid.d != 2:
            raise UnsupportedShape("rotation needs a 2-d grid")
        a, b = -math.tan(self.theta / 2), math.sin(self.theta)
        # R_theta = Sx(a) Sy(b) Sx(a) with Sx(a) = [[1, a], [0, 1]], Sy(b) = [[1, 0], [b, 1]]
        psi = _shear(psi, 0, 1, a)
        psi = _shear(psi, 1, 0, b)
        return _shear(psi, 0, 1, a)


def rotate(psi: GridState, theta: float) -> GridState:
    return Rotation(theta).apply(psi)


def apply_linear_pullback(M, psi: GridState) -> GridState:
    return Pullback(np.asarray(M)).apply(psi)


# -- Weyl operators ----------------------------------------------------------------------


def _axes_for(A: OperatorCoeffs, grid: Grid):
    if len(A.variables) != grid.d:
        raise UnsupportedShape(f"operator has {len(A.variables)} variables, grid has {grid.d} axes")
    return np.array([float(v) for v in A.pos]), np.array([float(v) for v in A.mom])


def _check_support(psi: GridState, tol: float = 1e-6):
    if psi.boundary_mass() > tol:
        raise SupportOverflow(f"state mass {psi.boundary_mass():.2e} near the boundary")


def apply_weyl(A: OperatorCoeffs, alpha: float, psi: GridState) -> GridState:
    """exp(i alpha A) psi for A = a.t + b.(-pi i grad)."""
    g = psi.grid
    a, b = _axes_for(A, g)
    if A.scalar != 0:
        raise UnsupportedShape("scalar part must vanish for a unitary Weyl operator")
    if alpha == 0:
        return psi
    _check_support(psi)
    shift = alpha * math.pi * b
    if np.max(np.abs(shift)) > g.L / 2:
        raise AliasRisk(f"translation by {shift} wraps around the domain")
    f = np.fft.fftn(psi.values)
    phase = np.zeros(g.shape)
    for ax in range(g.d):
        phase = phase + shift[ax] * g.axis_values(ax, momentum=True)
    out = np.fft.ifftn(f * np.exp(1j * phase))
    lin = np.zeros(g.shape)
    for ax in range(g.d):
        lin = lin + alpha * a[ax] * g.axis_values(ax)
    # exp(X + Y) = exp(X) exp(Y) exp(-[X, Y] / 2), [a.t, b.(-pi i grad)] = pi i (a.b)
    bch = alpha**2 * math.pi * float(np.dot(a, b)) / 2
    return psi.with_values(out * np.exp(1j * lin) * np.exp(1j * bch))


# -- two-variable functional calculus -------------------------------------------------------


Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _kernel_for(params: QDParams | None, kernel: Kernel | None) -> Kernel:
    if kernel is not None:
        return kernel
    return lambda x, y: F_kernel_array(params, x, y)


def plan_F(params: QDParams | None, xk: OperatorCoeffs, yk: OperatorCoeffs, grid: Grid, kernel: Kernel | None = None) -> GridOperatorPlan:
    """Plan for F(xk, yk) with xk a momentum combination and yk a position combination."""
    if commutator(xk, yk) != 0:
        raise NonCommuting("x_k and y_k do not commute")
    if any(xk.pos) or any(yk.mom) or xk.scalar or yk.scalar:
        raise UnsupportedShape("x_k must be pure momentum and y_k pure position")
    f = _kernel_for(params, kernel)
    b = np.array([float(v) for v in xk.mom])
    a = np.array([float(v) for v in yk.pos])
    if len(b) != grid.d:
        raise UnsupportedShape("operator variables do not match the grid")
    mom_axes = tuple(int(i) for i in np.nonzero(b)[0])
    pos_axes = tuple(int(i) for i in np.nonzero(a)[0])
    if not set(mom_axes) & set(pos_axes):
        x = sum((math.pi * b[ax] * grid.axis_values(ax, momentum=True) for ax in mom_axes), np.zeros((1,) * grid.d))
        y = sum((a[ax] * grid.axis_values(ax) for ax in pos_axes), np.zeros((1,) * grid.d))
        vals = np.broadcast_to(f(*np.broadcast_arrays(x, y)), grid.shape).copy()
        if not mom_axes:
            return Multiplier(vals)
        return FourierMultiplier(mom_axes, vals)
    if grid.d != 2 or abs(float(np.dot(a, b))) > 1e-15:
        raise UnsupportedShape("overlapping supports need a 2-d grid and orthogonal directions")
    nb, na = float(np.linalg.norm(b)), float(np.linalg.norm(a))
    bh, ah = b / nb, a / na
    ysign = 1.0
    if bh[0] * ah[1] - bh[1] * ah[0] < 0:
        ah, ysign = -ah, -1.0
    theta = math.atan2(bh[1], bh[0])
    # g(u, v) = f(u bh + v ah): pullback by the rotation with columns bh, ah
    x = math.pi * nb * grid.axis_values(0, momentum=True)
    y = ysign * na * grid.axis_values(1)
    vals = np.broadcast_to(f(*np.broadcast_arrays(x, y)), grid.shape).copy()
    return Composite([Rotation(theta), FourierMultiplier((0,), vals), Rotation(-theta)])


def apply_F(params: QDParams | None, xk: OperatorCoeffs, yk: OperatorCoeffs, psi: GridState, kernel: Kernel | None = None) -> GridState:
    """F^hbar_Lambda(x_k, y_k) psi by simultaneous diagonalization."""
    return plan_F(params, xk, yk, psi.grid, kernel).apply(psi)


# -- pentagon checks -------------------------------------------------------------------------


@dataclass
class ResidualReport:
    lam: int | None
    hbar: float | None
    N: int
    L: float
    states: int
    max_residual: float
    per_state: list

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "hbar": self.hbar,
            "N": self.N,
            "L": self.L,
            "states": self.states,
            "max_residual": float(f"{self.max_residual:.17g}"),
            "per_state": [float(f"{r:.17g}") for r in self.per_state],
        }


def verify_phi_pentagon(hbar: float, grid: Grid, states: Sequence[GridState] | None = None, phi: Callable | None = None) -> ResidualReport:
    """Residual of Phi(P) Phi(Q) = Phi(Q) Phi(P + Q) Phi(P) with [P, Q] = 2 pi i hbar.

    Q is multiplication by x and P = 2 pi i hbar d/dx. P + Q is reached by the
    chirp exp(i Q^2 / (4 pi hbar)) conjugating P.
    """
    if grid.d != 1:
        raise ValueError("the Phi pentagon runs on a 1-d grid")
    var = (1,)
    Q = OperatorCoeffs.position(var, 1)
    P = OperatorCoeffs(var, [0], [-2 * Fraction(hbar).limit_denominator(10**9)])
    r = check_weyl_consistency(P, Q)
    if r <= 0:
        raise AssertionError("P and Q must satisfy [P, Q] = 2 pi i hbar with hbar > 0")
    if phi is None:
        phi = RealPhiTable(hbar)
    states = list(states) if states is not None else test_states(grid, boosts=PHI_BOOSTS)
    p_eig = -2 * math.pi * hbar * grid.p
    phi_P = FourierMultiplier((0,), phi(p_eig))
    phi_Q = Multiplier(phi(grid.t))
    phi_PQ = ChirpConjugated(1 / (4 * math.pi * hbar), phi_P)
    lhs = Composite([phi_Q, phi_P])
    rhs = Composite([phi_P, phi_PQ, phi_Q])
    per = [relative_residual(lhs(s), rhs(s), s) for s in states]
    return ResidualReport(None, hbar, grid.N, grid.L, len(states), max(per), per)


def pentagon_operators(eps12: int = 1):
    """x_1, y_1, x_2, y_2 on two variables for eps = [[0, e], [-e, 0]]."""
    var = (1, 2)
    x1, x2 = OperatorCoeffs.momentum(var, 1), OperatorCoeffs.momentum(var, 2)
    y1 = OperatorCoeffs(var, [0, eps12], [0, 0])
    y2 = OperatorCoeffs(var, [-eps12, 0], [0, 0])
    return x1, y1, x2, y2


def verify_F_pentagon(params: QDParams, grid: Grid, states: Sequence[GridState] | None = None, kernel: Kernel | None = None) -> ResidualReport:
    """Residual of F(x1,y1) F(x2,y2) = F(x2,y2) F(x1+x2,y1+y2) F(x1,y1) on a 2-d grid."""
    if grid.d != 2:
        raise ValueError("the F pentagon runs on a 2-d grid")
    x1, y1, x2, y2 = pentagon_operators(1)
    needed = {(x1, y2): 1, (y1, x2): 1, (x1, y1): 0, (x2, y2): 0, (x1, x2): 0, (y1, y2): 0}
    for (A, B), want in needed.items():
        if commutator(A, B) != want:
            raise AssertionError("pentagon operators violate the Heisenberg relations")
    states = list(states) if states is not None else test_states(grid, boosts=F_BOOSTS)
    F1 = plan_F(params, x1, y1, grid, kernel)
    F2 = plan_F(params, x2, y2, grid, kernel)
    F12 = plan_F(params, x1 + x2, y1 + y2, grid, kernel)
    lhs = Composite([F2, F1])
    rhs = Composite([F1, F12, F2])
    per = [relative_residual(lhs(s), rhs(s), s) for s in states]
    lam = params.lam if params else None
    hb = params.hbar if params else None
    return ResidualReport(lam, hb, grid.N, grid.L, len(states), max(per), per)


def refinement_study(run: Callable[[Grid], ResidualReport], d: int, sizes=(512, 1024, 2048), base_N: int = 512, base_L: float = 12.0) -> list[ResidualReport]:
    """Residual reports over a ladder of grids at fixed spacing.

    The half-width grows with N (L = base_L * N / base_N), so each step both
    resolves higher momenta and pushes the periodic boundary further out.
    Test states are redrawn on each grid with the same seed.
    """
    return [run(Grid(d, N, base_L * N / base_N)) for N in sizes]


def strictly_decreasing(reports: Sequence[ResidualReport]) -> bool:
    r = [rep.max_residual for rep in reports]
    return all(b < a for a, b in zip(r, r[1:]))


def refinement_csv(reports: Sequence[ResidualReport]) -> str:
    lines = ["N,L,max_residual"]
    lines += [f"{r.N},{r.L:.17g},{r.max_residual:.17g}" for r in reports]
    return "\n".join(lines) + "\n"
