"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``. The operator pentagon
criterion takes several minutes.
"""

import cmath
import math
import time

import numpy as np
import pytest
import sympy

from conftest import FIXTURES, load_fixture
from trilogy.heisenberg import (
    constraint_violations,
    echelon_reduce,
    heisenberg_violations,
    irreducible_solution,
    reducible_solution,
)
from trilogy.intertwiner import compile_word, research, rho, verify_relation_suite
from trilogy.opcalc import (
    F_BOOSTS,
    Grid,
    refinement_study,
    strictly_decreasing,
    test_states as make_states,
    verify_F_pentagon,
    verify_phi_pentagon,
)
from trilogy.qdilog import (
    F_kernel_array,
    PoleHit,
    QDParams,
    log_phi_hbar,
    phi_h_ratio,
    phi_hbar,
    phi_ihbar,
    psi_q,
)
from trilogy.triangulation import (
    MappingClassLoop,
    exchange_matrix,
    flip,
    mutate_exchange,
    random_loop,
    random_word,
)

SEED = 7


def _finish(parts, criterion, number, started, budget):
    elapsed = time.perf_counter() - started
    criterion(number, f"runtime <= {budget:g} s", elapsed <= budget, f"({elapsed:.1f} s)")
    failed = [p for p, ok in parts if not ok]
    assert elapsed <= budget and not failed, failed


# -- criterion 1 ----------------------------------------------------------------


def test_criterion_1_special_functions(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    parts = []

    def rec(name, value, tol):
        ok = value <= tol
        parts.append((name, ok))
        criterion(1, name, ok, f"(max {value:.3g}, tol {tol:g})")

    worst, done = 0.0, 0
    while done < 100:
        q = rng.uniform(0.05, 0.95) * cmath.exp(2j * math.pi * rng.uniform())
        z = complex(*rng.uniform(-5, 5, 2))
        try:
            lhs, rhs = psi_q(q, q * q * z), (1 + q * z) * psi_q(q, z)
        except PoleHit:
            continue
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
        done += 1
    rec("psi difference equation", worst, 1e-12)

    shift_res, unit_res, inv_res = 0.0, 0.0, 0.0
    x = np.linspace(-4, 4, 41)
    for h in (0.3, 0.7, 1.0, 2.5):
        z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(-0.5, 0.5, 100) * math.pi * min(1, h)
        f0 = phi_hbar(h, z)
        a = phi_hbar(h, z + 2j * math.pi * h) - (1 + cmath.exp(1j * math.pi * h) * np.exp(z)) * f0
        b = phi_hbar(h, z + 2j * math.pi) - (1 + cmath.exp(1j * math.pi / h) * np.exp(z / h)) * f0
        shift_res = max(shift_res, np.max(np.abs(a)), np.max(np.abs(b)))
        unit_res = max(unit_res, np.max(np.abs(np.abs(phi_hbar(h, x)) - 1)))
        w = z[:20]
        inv_res = max(inv_res, np.max(np.abs(phi_hbar(h, w) * phi_hbar(-h, w) - 1)))
    rec("Phi difference equations", shift_res, 1e-9)
    rec("Phi unimodular on reals", unit_res, 1e-9)
    rec("Phi(hbar) Phi(-hbar) = 1", inv_res, 1e-9)

    h = 0.6 + 0.4j
    z = rng.uniform(-2, 2, 10) + 1j * rng.uniform(-0.3, 0.3, 10)
    rec("Barnes vs ratio formula", np.max(np.abs(np.exp(log_phi_hbar(h, z)) - phi_h_ratio(h, z))), 1e-8)

    conj = 0.0
    for hb in (0.7, 1.3):
        z = rng.uniform(-4, 4, 40) + 1j * rng.uniform(-2, 2, 40)
        prod = phi_ihbar(-1, hb, z) * np.conj(phi_ihbar(1, hb, np.conj(z)))
        conj = max(conj, np.max(np.abs(prod - 1)))
    rec("modular double conjugation", conj, 1e-10)

    xg, yg = np.meshgrid(np.linspace(-3, 3, 21), np.linspace(-3, 3, 21))
    for lam in (-1, 0, 1):
        F = F_kernel_array(QDParams(lam, 0.7), xg, yg)
        rec(f"|F| = 1 on 21x21, lambda={lam}", np.max(np.abs(np.abs(F) - 1)), 1e-9)

    _finish(parts, criterion, 1, t0, 60)


# -- criterion 2 ----------------------------------------------------------------


def test_criterion_2_exact_combinatorics(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    parts = []

    def rec(name, ok, detail=""):
        parts.append((name, ok))
        criterion(2, name, ok, detail)

    checked_flips = 0
    for name in FIXTURES:
        T = load_fixture(name)
        n = T.signature.punctures
        E = exchange_matrix(T)
        eps = sympy.Matrix(E.eps.tolist())
        V = sympy.Matrix(E.valences.tolist())
        rec(f"{name}: eps skew", eps == -eps.T)
        rec(f"{name}: eps v_p = 0", (eps * V).is_zero_matrix)
        rec(f"{name}: valence rank = n", V.rank() == n, f"(rank {V.rank()}, n {n})")
        rec(f"{name}: dim ker eps = n", len(eps.nullspace()) == n)

        rep = verify_relation_suite(T, QDParams(-1, 0.7), numeric=False)
        kinds = sorted({r["relation"] for r in rep.instances})
        rec(f"{name}: relations close (triangulations and linear parts)", rep.exact_ok,
            f"({len(rep.instances)} instances: {', '.join(kinds)})")

        if T.legal_flips():
            ok = True
            S = T
            for _ in range(200):
                k = int(rng.choice(S.legal_flips()))
                ok &= np.array_equal(exchange_matrix(flip(S, k)).eps, mutate_exchange(exchange_matrix(S).eps, k))
                S = flip(S, k)
                checked_flips += 1
            rec(f"{name}: exchange matrix commutes with mutation", ok, "(200 random flips)")
    rec("at least 200 random flips checked", checked_flips >= 200, f"({checked_flips})")

    _finish(parts, criterion, 2, t0, 30)


# -- criterion 3 ----------------------------------------------------------------


def test_criterion_3_constrained_representation(criterion):
    t0 = time.perf_counter()
    parts = []
    for name in FIXTURES:
        E = exchange_matrix(load_fixture(name))
        ops = irreducible_solution(E, echelon_reduce(E.valences))
        hv, cv = heisenberg_violations(ops, E), constraint_violations(ops, E.valences)
        ok = not hv and not cv
        parts.append((name, ok))
        criterion(3, f"{name}: irreducible solution exact", ok, f"({len(hv)} relation, {len(cv)} constraint violations)")
    E = exchange_matrix(load_fixture("example_0_4"))
    bad = constraint_violations(reducible_solution(E), E.valences)
    ok = bool(bad) and {b["constraint"] for b in bad} == {"x"}
    parts.append(("negative control", ok))
    criterion(3, "negative control: reducible model breaks the x-constraint on (0,4)", ok, f"({len(bad)} violations)")
    _finish(parts, criterion, 3, t0, 5)


# -- criterion 4 ----------------------------------------------------------------

C4_TOL = 1e-3
_c4_time = []


def _timed(fn):
    t = time.perf_counter()
    out = fn()
    _c4_time.append(time.perf_counter() - t)
    return out


def _phi_run(hbar):
    return lambda g: verify_phi_pentagon(hbar, g)


def _f_run(params):
    return lambda g: verify_F_pentagon(params, g, make_states(g, boosts=F_BOOSTS))


@pytest.mark.slow
@pytest.mark.parametrize("hbar", [0.7, 1.0])
def test_criterion_4_phi_pentagon(hbar, criterion):
    rep = _timed(lambda: _phi_run(hbar)(Grid(1, 1024, 12.0)))
    ok = rep.max_residual <= C4_TOL
    criterion(4, f"Phi pentagon hbar={hbar} at 1024/12", ok, f"({rep.max_residual:.3g})")
    ladder = _timed(lambda: refinement_study(_phi_run(hbar), 1))
    dec = strictly_decreasing(ladder)
    criterion(4, f"Phi pentagon hbar={hbar} decreases under refinement", dec,
              "(" + " > ".join(f"{r.max_residual:.2g}" for r in ladder) + ")")
    assert ok and dec


@pytest.mark.slow
@pytest.mark.parametrize("lam", [-1, 0])
def test_criterion_4_F_pentagon(lam, criterion):
    params = QDParams(lam, 0.7)
    rep = _timed(lambda: _f_run(params)(Grid(2, 1024, 12.0)))
    ok = rep.max_residual <= C4_TOL
    criterion(4, f"F pentagon lambda={lam} at 1024/12", ok, f"({rep.max_residual:.3g})")
    ladder = _timed(lambda: refinement_study(_f_run(params), 2))
    dec = strictly_decreasing(ladder)
    criterion(4, f"F pentagon lambda={lam} decreases under refinement", dec,
              "(" + " > ".join(f"{r.max_residual:.2g}" for r in ladder) + ")")
    assert ok and dec


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="the lambda=+1 kernel's factorization through Phi^{i hbar} meets poles on the real "
    "plane; the residual plateaus near 0.23 independent of the grid (see the decision notes)",
)
def test_criterion_4_F_pentagon_lambda_plus(criterion):
    params = QDParams(1, 0.7)
    rep = _timed(lambda: _f_run(params)(Grid(2, 1024, 12.0)))
    ok = rep.max_residual <= C4_TOL
    criterion(4, "F pentagon lambda=1 at 1024/12", ok, f"({rep.max_residual:.3g}, tol {C4_TOL:g})")
    ladder = _timed(lambda: refinement_study(_f_run(params), 2))
    dec = strictly_decreasing(ladder)
    criterion(4, "F pentagon lambda=1 decreases under refinement", dec,
              "(" + ", ".join(f"{r.max_residual:.2g}" for r in ladder) + ")")
    assert ok and dec


@pytest.mark.slow
def test_criterion_4_runtime(criterion):
    total = sum(_c4_time)
    ok = total <= 600
    criterion(4, "runtime <= 600 s", ok, f"({total:.0f} s)")
    assert ok


# -- criterion 5 ----------------------------------------------------------------


def test_criterion_5_representation_consistency(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    T = load_fixture("example_0_4")
    P = QDParams(-1, 0.7)
    parts = []

    bad = 0
    for _ in range(20):
        h1, h2 = random_loop(T, 4, rng), random_loop(T, 4, rng)
        prod = rho(h1, P) * rho(h2, P)
        direct = rho(MappingClassLoop(research(h1.then(h2).word, rng)), P)
        bad += prod.linear_part() != direct.linear_part()
    parts.append(("homomorphism", bad == 0))
    criterion(5, "homomorphism on 20 loop pairs", bad == 0, f"({bad} mismatches)")

    bad = distinct = 0
    for _ in range(50):
        w = random_word(T, 6, rng)
        other = research(w, rng, window=3)
        distinct += other.moves != w.moves
        bad += other.end() != w.end() or compile_word(w, P).linear_part() != compile_word(other, P).linear_part()
    parts.append(("path independence", bad == 0))
    criterion(5, "path independence on 50 pairs", bad == 0, f"({bad} mismatches, {distinct} pairs with distinct words)")

    rep = verify_relation_suite(T, P, grid=Grid(2, 512, 12.0), numeric=True)
    ok = rep.negative_control > 0.1 and all(v <= rep.tol for v in rep.pentagon.values())
    parts.append(("negative control", ok))
    criterion(5, "negative control: one corrupted Auto factor", ok,
              f"(corrupted {rep.negative_control:.3g}; intact {max(rep.pentagon.values()):.2g})")

    _finish(parts, criterion, 5, t0, 120)
