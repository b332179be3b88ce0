import math

import numpy as np
import pytest
import sympy

from trilogy.heisenberg import OperatorCoeffs, check_weyl_consistency
from trilogy.opcalc import (
    AliasRisk,
    ChirpConjugated,
    F_BOOSTS,
    FourierMultiplier,
    Grid,
    GridState,
    NonCommuting,
    Pullback,
    Rotation,
    SupportOverflow,
    apply_F,
    apply_weyl,
    gaussian_state,
    relative_residual,
    test_states as make_states,
    verify_F_pentagon,
    verify_phi_pentagon,
)
from trilogy.qdilog import QDParams


def band_limited(grid, rng, modes=6):
    """Random smooth state: a sum of narrow Gaussians near the origin."""
    vals = np.zeros(grid.shape, dtype=complex)
    for _ in range(modes):
        c = rng.uniform(-1.5, 1.5, grid.d)
        w = rng.uniform(0.7, 1.2, grid.d)
        k = rng.uniform(-1, 1, grid.d)
        vals += (rng.normal() + 1j * rng.normal()) * gaussian_state(grid, c, w, k).values
    s = GridState(vals, grid)
    return s.with_values(vals / s.norm())


def test_chirp_conjugation_symbolic():
    x, a, hb = sympy.symbols("x alpha hbar", real=True)
    f = sympy.Function("f")
    P = lambda g: 2 * sympy.pi * sympy.I * hb * sympy.diff(g, x)
    chirp = sympy.exp(sympy.I * a * x**2)
    lhs = chirp * P(f(x) / chirp)
    rhs = P(f(x)) + 4 * sympy.pi * hb * a * x * f(x)
    assert sympy.simplify(lhs - rhs) == 0


def test_grid_layout():
    g = Grid(1, 64, 4.0)
    assert g.t[0] == -4.0 and math.isclose(g.t[-1], 4.0 - g.dx)
    assert math.isclose(np.max(np.abs(g.p)), math.pi / g.dx)
    with pytest.raises(ValueError):
        Grid(1, 100, 4.0)
    with pytest.raises(ValueError):
        Grid(3, 64, 4.0)


def test_momentum_convention():
    g = Grid(1, 256, 12.0)
    s = gaussian_state(g, 0.0, 1.0, 0.0)
    # x = -pi i d/dt acts as pi * p on the Fourier side
    d = FourierMultiplier((0,), math.pi * g.p).apply(s).values
    exact = -1j * math.pi * (-g.t) * s.values
    assert np.max(np.abs(d - exact)) < 1e-10


def test_weyl_commuting_pair(rng):
    g = Grid(2, 256, 12.0)
    psi = band_limited(g, rng)
    var = (1, 2)
    A = OperatorCoeffs(var, [1, 0], [0, 0])
    B = OperatorCoeffs(var, [0, 0], [0, 1])
    assert check_weyl_consistency(A, B) == 0
    lhs = apply_weyl(A, 0.7, apply_weyl(B, -0.4, psi))
    rhs = apply_weyl(B, -0.4, apply_weyl(A, 0.7, psi))
    assert relative_residual(lhs, rhs, psi) < 1e-8


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.3), (-1.1, 0.8), (0.25, -1.5)])
def test_weyl_canonical_pair(alpha, beta, rng):
    g = Grid(1, 512, 12.0)
    var = (1,)
    A = OperatorCoeffs.position(var, 1)
    B = OperatorCoeffs.momentum(var, 1)
    c = math.pi * float(check_weyl_consistency(A, B))
    for _ in range(5):
        psi = band_limited(g, rng)
        lhs = apply_weyl(A, alpha, apply_weyl(B, beta, psi))
        rhs = apply_weyl(B, beta, apply_weyl(A, alpha, psi))
        assert relative_residual(lhs, rhs.with_values(rhs.values * np.exp(-1j * c * alpha * beta)), psi) < 1e-6


def test_weyl_mixed_operator_is_exponential(rng):
    # e^{i a (t + x)} from the BCH split must compose additively
    g = Grid(1, 512, 12.0)
    A = OperatorCoeffs((1,), [1], [1])
    psi = band_limited(g, rng)
    twice = apply_weyl(A, 0.3, apply_weyl(A, 0.3, psi))
    once = apply_weyl(A, 0.6, psi)
    assert relative_residual(twice, once, psi) < 1e-8


def test_weyl_guards():
    g = Grid(1, 128, 6.0)
    B = OperatorCoeffs.momentum((1,), 1)
    psi = gaussian_state(g, 0.0, 0.5, 0.0)
    with pytest.raises(AliasRisk):
        apply_weyl(B, 5.0, psi)
    edge = gaussian_state(g, 5.5, 0.5, 0.0)
    with pytest.raises(SupportOverflow):
        apply_weyl(B, 0.1, edge)
    with pytest.raises(SupportOverflow):
        make_states(Grid(1, 128, 3.0))


def test_pullback_exact():
    g = Grid(2, 256, 12.0)
    M = np.array([[-1, 1], [0, 1]])

    def gauss(s1, s2):
        return np.exp(-((s1 - 0.2) ** 2) / 1.28 - (s2 + 0.1) ** 2 / 1.62 + 1j * (0.3 * s1 - 0.2 * s2))

    T1, T2 = np.meshgrid(g.t, g.t, indexing="ij")
    raw = gauss(T1, T2)
    psi = GridState(raw, g)
    out = Pullback(M).apply(psi)
    want = gauss(M[0, 0] * T1 + M[0, 1] * T2, M[1, 0] * T1 + M[1, 1] * T2)
    assert np.max(np.abs(out.values - want)) < 1e-10


def test_rotation_roundtrip_and_unitarity():
    g = Grid(2, 256, 12.0)
    psi = gaussian_state(g, [0.5, -0.3], [1.0, 0.7], [0.2, 0.4])
    rot = Rotation(math.pi / 4).apply(psi)
    assert abs(rot.norm() - 1) < 1e-12
    back = Rotation(-math.pi / 4).apply(rot)
    assert relative_residual(back, psi, psi) < 1e-12


def test_F_plan_guards():
    g = Grid(2, 128, 12.0)
    psi = gaussian_state(g, 0.0, 1.0, 0.0)
    x = OperatorCoeffs.momentum((1, 2), 1)
    with pytest.raises(NonCommuting):
        apply_F(QDParams(0, 1.0), x, OperatorCoeffs.position((1, 2), 1), psi)


def test_phi_pentagon_with_trivial_function():
    g = Grid(1, 512, 12.0)
    rep = verify_phi_pentagon(0.7, g, phi=lambda v: np.ones_like(v, dtype=complex))
    assert rep.max_residual < 1e-14


def test_phi_pentagon_small_grid():
    rep = verify_phi_pentagon(0.7, Grid(1, 512, 12.0))
    assert rep.max_residual < 1e-3 and rep.states == 5
    assert set(rep.to_json()) == {"lambda", "hbar", "N", "L", "states", "max_residual", "per_state"}


@pytest.mark.parametrize("lam", [-1, 0])
def test_F_pentagon_small_grid(lam):
    rep = verify_F_pentagon(QDParams(lam, 0.7), Grid(2, 256, 12.0))
    assert rep.max_residual < 1e-3


def test_F_pentagon_detects_wrong_kernel():
    P = QDParams(-1, 0.7)
    from trilogy.qdilog import F_kernel_array

    rep = verify_F_pentagon(P, Grid(2, 256, 12.0), kernel=lambda x, y: F_kernel_array(P, x, -y))
    assert rep.max_residual > 0.1


def test_states_are_reproducible():
    g = Grid(2, 128, 12.0)
    a = make_states(g, seed=3, boosts=F_BOOSTS)
    b = make_states(g, seed=3, boosts=F_BOOSTS)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
