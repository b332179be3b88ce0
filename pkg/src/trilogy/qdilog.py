"""Quantum dilogarithms: compact psi^q, Barnes-type Phi^hbar, the modular double
Phi^{+-i hbar}, and the two-variable kernels F^hbar_Lambda.

All evaluators work with logarithms internally. exp(log) is only taken at the
end, so products with astronomically large or small factors stay accurate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

__all__ = [
    "QDParams",
    "AccuracyBudget",
    "PoleHit",
    "NonConvergent",
    "QuadratureFailure",
    "PoleOfContinuation",
    "psi_q",
    "log_psi_q",
    "phi_hbar",
    "log_phi_hbar",
    "phi_h_ratio",
    "phi_ihbar",
    "log_phi_ihbar",
    "F_kernel",
    "F_kernel_array",
    "RealPhiTable",
    "inversion_constant",
]


class PoleHit(ZeroDivisionError):
    pass


class NonConvergent(ValueError):
    pass


class QuadratureFailure(ArithmeticError):
    pass


class PoleOfContinuation(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class QDParams:
    lam: int
    hbar: float

    def __post_init__(self):
        if self.lam not in (-1, 0, 1):
            raise ValueError(f"lambda must be -1, 0 or 1, got {self.lam}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")


@dataclass(frozen=True)
class AccuracyBudget:
    abs_tol: float = 1e-13
    max_terms: int = 10**6
    nodes_per_unit: float | None = None  # trapezoid density; default from the pole distance
    truncation_radius: float | None = None  # default from the integrand decay rate
    r: float | None = None  # semicircle radius around p = 0

    def __post_init__(self):
        if self.abs_tol < 1e-16:
            raise ValueError("abs_tol below the double-precision floor")


DEFAULT = AccuracyBudget()
_POLE_EPS = 1e-13


def _log1pexp(b):
    """Some branch of log(1 + e^b), accurate for any complex b."""
    b = np.asarray(b, dtype=complex)
    big = b.real > 0
    with np.errstate(over="ignore"):
        out = np.where(big, b + np.log1p(np.exp(-np.where(big, b, 0))), np.log1p(np.exp(np.where(big, 0, b))))
    return out


# -- compact quantum dilogarithm ------------------------------------------------


def _log_psi_from_log(q, logz, budget: AccuracyBudget):
    """log psi^q(e^{logz}) without forming e^{logz}, which may overflow."""
    q = complex(q)
    if abs(q) >= 1:
        raise NonConvergent(f"|q| = {abs(q)} >= 1")
    a = np.asarray(logz, dtype=complex)
    if a.size == 0:
        return a.copy()
    lq = np.log(q)
    rate = -2 * lq.real  # Re b_m drops by this much per factor
    # factors with Re b > 40 contribute b itself up to e^-40, summed in closed form
    K = np.maximum(0, np.ceil((a.real + lq.real - 40) / rate)).astype(np.int64)
    acc = -(K * a + K.astype(float) ** 2 * lq)
    # the tail after factor m is bounded by e^{Re b_m} / (1 - |q|^2)
    floor = math.log(budget.abs_tol * (1 - abs(q) ** 2))
    stop = np.ceil((a.real + lq.real - floor) / rate).astype(np.int64) + 1
    m0, M = int(K.min()), int(stop.max())
    if M - m0 > budget.max_terms:
        raise NonConvergent(f"needs {M - m0} factors, budget {budget.max_terms}")
    flat_a, flat_acc = a.reshape(-1), acc.reshape(-1).copy()
    flat_K, flat_stop = K.reshape(-1), stop.reshape(-1)
    for m in range(m0, M):
        idx = np.nonzero((flat_K <= m) & (flat_stop > m))[0]
        if idx.size == 0:
            continue
        b = flat_a[idx] + (2 * m + 1) * lq
        near = np.abs(b.real) < 1
        if near.any() and np.min(np.abs(1 + np.exp(b[near]))) < _POLE_EPS:
            raise PoleHit(f"factor m={m} of psi^q vanishes")
        flat_acc[idx] -= _log1pexp(b)
    acc = flat_acc.reshape(a.shape)
    return acc


def log_psi_q(q, z, budget: AccuracyBudget = DEFAULT):
    """log of prod_{m>=0} (1 + q^{2m+1} z)^{-1}, elementwise in z."""
    z = np.asarray(z, dtype=complex)
    nz = z != 0
    out = np.zeros(z.shape, dtype=complex)
    if abs(complex(q)) >= 1:
        raise NonConvergent(f"|q| = {abs(complex(q))} >= 1")
    if np.any(nz):
        out[nz] = _log_psi_from_log(q, np.log(z[nz]), budget)
    return out[()] if out.ndim == 0 else out


def psi_q(q, z, budget: AccuracyBudget = DEFAULT):
    """Compact quantum dilogarithm psi^q(z), |q| < 1."""
    return np.exp(log_psi_q(q, z, budget))


# -- Barnes integral ------------------------------------------------------------------


def inversion_constant(h) -> complex:
    """C with Phi(z) Phi(-z) = C exp(z^2 / (4 pi i h)); obtained from residues at p = 0."""
    return np.exp(-1j * np.pi * (h + 1 / h) / 12)


def _integrand(p, z, h):
    """e^{-ipz} / (sinh(pi p) sinh(pi h p) p), written to avoid overflow."""
    p = np.asarray(p, dtype=complex)
    s = np.where(p.real >= 0, 1.0, -1.0)
    num = np.exp(-1j * p * z - s * np.pi * p * (1 + h))
    den = (-np.expm1(-2 * s * np.pi * p)) * (-np.expm1(-2 * s * np.pi * h * p)) * p
    return 4 * num / den


def _decay_rate(h, z) -> float:
    kappa = np.pi * (1 + np.real(h)) - abs(np.imag(z))
    if kappa <= 0:
        raise QuadratureFailure(f"Im z = {np.imag(z)} outside the strip of convergence")
    return kappa


def _pole_distance(h) -> float:
    return min(1.0, float(np.real(1 / h)))


def _barnes_line(h, z, budget: AccuracyBudget):
    """Trapezoid rule on the horizontal line Im p = sigma, between 0 and the first poles."""
    z = np.asarray(z, dtype=complex)
    sigma = 0.5 * _pole_distance(h)
    du = 1 / budget.nodes_per_unit if budget.nodes_per_unit else sigma / 12
    kappa = np.min(np.pi * (1 + np.real(h)) - np.abs(z.imag))
    if kappa <= 0:
        raise QuadratureFailure("argument outside the strip of convergence")
    U = budget.truncation_radius or 42 / kappa
    u = np.arange(-U, U + du / 2, du)
    p = u + 1j * sigma
    out = np.empty(z.shape, dtype=complex)
    flat_z, flat_o = z.reshape(-1), out.reshape(-1)
    for start in range(0, flat_z.size, 2048):
        zz = flat_z[start : start + 2048]
        flat_o[start : start + 2048] = -0.25 * du * _integrand(p[None, :], zz[:, None], h).sum(axis=1)
    return out


def _barnes_contour(h, z, budget: AccuracyBudget) -> complex:
    """Adaptive quadrature on the real line with a semicircle of radius r above 0."""
    r = budget.r or min(np.pi, np.pi / abs(h)) / 4
    if r >= _pole_distance(h):
        raise QuadratureFailure(f"semicircle radius {r} reaches a pole")
    U = budget.truncation_radius or 42 / _decay_rate(h, z)

    def arc(t):
        p = r * np.exp(1j * t)
        return _integrand(p, z, h) * 1j * p

    def line(u):
        return _integrand(u, z, h) + _integrand(-u, z, h)

    total, err = 0j, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for f, lo, hi in ((arc, np.pi, 0.0), (line, r, U)):
            for part in (np.real, np.imag):
                val, e = integrate.quad(lambda t: float(part(f(t))), lo, hi, epsabs=budget.abs_tol / 10, epsrel=0, limit=500)
                total += val if part is np.real else 1j * val
                err += e
    if err > budget.abs_tol * 100:
        raise QuadratureFailure(f"quadrature error estimate {err:.2e} above budget")
    return -0.25 * total


def _continue_into_window(hbar: float, z: complex):
    """Shift z by multiples of 2 pi i hbar into |Im z| <= pi hbar; returns (z0, log factor)."""
    step = 2 * np.pi * hbar
    n = int(np.round(z.imag / step))
    z0 = z - 1j * step * n
    log_fac = 0j
    qh = np.exp(1j * np.pi * hbar)
    for j in range(abs(n)):
        w = z0 + 1j * step * j if n > 0 else z + 1j * step * j
        f = 1 + qh * np.exp(w)
        if abs(f) < _POLE_EPS:
            raise PoleOfContinuation(f"continuation factor vanishes at {w}")
        log_fac += np.log(f)
    return z0, (log_fac if n > 0 else -log_fac)


def log_phi_hbar(hbar, z, method: str = "line", budget: AccuracyBudget = DEFAULT):
    """log Phi^hbar(z), elementwise. hbar may be a negative real or a complex number with Re > 0."""
    arr = np.asarray(z, dtype=complex)
    if arr.ndim == 0:
        return _log_phi_scalar(hbar, complex(arr), method, budget)
    out = np.empty(arr.shape, dtype=complex)
    for idx, v in np.ndenumerate(arr):
        out[idx] = _log_phi_scalar(hbar, complex(v), method, budget)
    return out


def _log_phi_scalar(hbar, z: complex, method: str, budget: AccuracyBudget) -> complex:
    if np.isreal(hbar):
        hbar = float(np.real(hbar))
        if hbar == 0:
            raise ValueError("hbar must be nonzero")
        if hbar < 0:
            return -_log_phi_scalar(-hbar, z, method, budget)
        z0, log_fac = _continue_into_window(hbar, z)
    else:
        if np.real(hbar) <= 0:
            raise ValueError("complex h needs Re h > 0")
        z0, log_fac = z, 0j
        _decay_rate(hbar, z)
    flip = z0.real > 0
    w = -z0 if flip else z0
    val = _barnes_line(hbar, w, budget) if method == "line" else _barnes_contour(hbar, w, budget)
    val = complex(val)
    if flip:
        val = np.log(inversion_constant(hbar)) + z0 * z0 / (4j * np.pi * hbar) - val
    return val + log_fac


def phi_hbar(hbar, z, method: str = "line", budget: AccuracyBudget = DEFAULT):
    """Non-compact quantum dilogarithm from its Barnes integral."""
    return np.exp(log_phi_hbar(hbar, z, method, budget))


def phi_h_ratio(h: complex, z, budget: AccuracyBudget = DEFAULT):
    """psi^{e^{pi i h}}(e^z) / psi^{e^{-pi i / h}}(e^{z/h}) for Im h > 0."""
    h = complex(h)
    if h.imag <= 0:
        raise NonConvergent("ratio formula needs Im h > 0")
    z = np.asarray(z, dtype=complex)
    return np.exp(log_psi_q(np.exp(1j * np.pi * h), np.exp(z), budget) - log_psi_q(np.exp(-1j * np.pi / h), np.exp(z / h), budget))


# -- modular double --------------------------------------------------------------------


def _real_q(x: float) -> float:
    if x >= 1 - 1e-12:
        raise NonConvergent(f"quantum parameter {x} too close to 1")
    return x


def log_phi_ihbar(sign: int, hbar: float, z, budget: AccuracyBudget = DEFAULT):
    """log Phi^{sign i hbar}(z) from its two compact factors."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    a, b = _real_q(math.exp(-math.pi * hbar)), _real_q(math.exp(-math.pi / hbar))
    z = np.asarray(z, dtype=complex)
    if sign == 1:
        return _log_psi_from_log(a, z, budget) - _log_psi_from_log(b, z / (1j * hbar), budget)
    return _log_psi_from_log(b, -z / (1j * hbar), budget) - _log_psi_from_log(a, z, budget)


def phi_ihbar(sign: int, hbar: float, z, budget: AccuracyBudget = DEFAULT, via: str = "ratio"):
    """Phi^{+i hbar} or Phi^{-i hbar}.

    ``via="conjugate"`` evaluates the minus sign as 1 / conj(Phi^{i hbar}(conj z)).
    """
    if via == "conjugate" and sign == -1:
        z = np.asarray(z, dtype=complex)
        return 1 / np.conj(np.exp(log_phi_ihbar(1, hbar, np.conj(z), budget)))
    return np.exp(log_phi_ihbar(sign, hbar, z, budget))


# -- real-axis table ----------------------------------------------------------------------


class RealPhiTable:
    """Fast Phi^hbar on the real line.

    The phase is tabulated on [-X, 0] with X = 40 max(1, hbar) by the line
    quadrature and interpolated with a cubic spline. Below -X the function
    equals 1 to double precision, and positive arguments use the inversion
    relation.
    """

    def __init__(self, hbar: float, spacing: float | None = None):
        if not hbar > 0:
            raise ValueError("table needs hbar > 0")
        self.hbar = hbar
        self.X = 40 * max(1.0, hbar)
        h = spacing or 0.004 * min(1.0, hbar)
        x = np.linspace(-self.X, 0.0, int(np.ceil(self.X / h)) + 1)
        theta = _barnes_line(hbar, x.astype(complex), DEFAULT).imag
        self._spline = CubicSpline(x, theta)
        self._c = -np.pi * (hbar + 1 / hbar) / 12

    def phase(self, x) -> np.ndarray:
        """theta(x) with Phi^hbar(x) = exp(i theta(x))."""
        x = np.asarray(x, dtype=float)
        ax = -np.abs(x)
        th = np.where(ax < -self.X, 0.0, self._spline(np.clip(ax, -self.X, 0.0)))
        return np.where(x > 0, self._c - x * x / (4 * np.pi * self.hbar) - th, th)

    def __call__(self, x) -> np.ndarray:
        return np.exp(1j * self.phase(x))


@lru_cache(maxsize=8)
def _table(hbar: float) -> RealPhiTable:
    return RealPhiTable(hbar)


# -- trilogy kernel ------------------------------------------------------------------------


def F_kernel(params: QDParams, x: float, y: float, budget: AccuracyBudget = DEFAULT) -> complex:
    """F^hbar_Lambda(x, y) at one real point, from the direct evaluators."""
    hb = params.hbar
    if params.lam == -1:
        return complex(np.exp(log_phi_hbar(hb, x + hb * y, budget=budget) - log_phi_hbar(hb, x - hb * y, budget=budget)))
    if params.lam == 1:
        w = complex(x, hb * y)
        lp = complex(log_phi_ihbar(1, hb, w, budget))
        lm = complex(log_phi_ihbar(-1, hb, np.conj(w), budget))
        return complex(np.exp(lp + lm))
    return complex(np.exp(-1j * y * np.logaddexp(0.0, x) / np.pi))


def F_kernel_array(params: QDParams, x, y, budget: AccuracyBudget = DEFAULT) -> np.ndarray:
    """Vectorized F^hbar_Lambda on broadcast real arrays."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    hb = params.hbar
    if params.lam == 0:
        return np.exp(-1j * y * np.logaddexp(0.0, x) / np.pi)
    if params.lam == -1:
        tab = _table(float(hb))
        return np.exp(1j * (tab.phase(x + hb * y) - tab.phase(x - hb * y)))
    # Lambda = +1: Phi^{-i hbar}(conj w) = 1 / conj(Phi^{i hbar}(w)), so F = exp(2 i Im log Phi^{i hbar}(w))
    w = x + 1j * hb * y
    lp = log_phi_ihbar(1, hb, w, budget)
    return np.exp(2j * np.imag(lp))
