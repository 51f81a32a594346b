"""The phase function and the roots of the phase equation Phi(phi) = tau.

Phi is a cross-correlation of the forcing with the adjoint solution, so it is
assembled mode by mode as an exact trigonometric polynomial.  Mode ``c_k``
represents ``Phi(phi) = Re c_0 + 2 Re sum_k c_k exp(-2 pi i k phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._grid import diff_x, node_weights, trig_eval, trig_eval_deriv
from .charops import Transport
from .field import Numerics, PeriodicField

GRID = 512
NONDEGENERATE = 1e-8
ROOT_TOL = 1e-10


class PhaseError(ValueError):
    """The phase curve does not allow the requested operation."""


@dataclass
class LockedPhase:
    phi: float
    slope: float

    @property
    def nondegenerate(self) -> bool:
        return abs(self.slope) > NONDEGENERATE


@dataclass
class PhaseCurve:
    """Samples and exact modes of the 1-periodic phase function."""

    coef: np.ndarray
    n_grid: int = GRID
    roots: dict = field(default_factory=dict)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_grid) / self.n_grid

    @property
    def values(self) -> np.ndarray:
        return self(self.grid)

    @property
    def derivative(self) -> np.ndarray:
        return self.slope(self.grid)

    def __call__(self, phi):
        return trig_eval(self.coef, phi)

    def slope(self, phi):
        return trig_eval_deriv(self.coef, phi)

    def shifted(self, psi: float) -> "PhaseCurve":
        """Curve of ``phi -> Phi(phi - psi)``."""
        k = np.arange(self.coef.size)
        return PhaseCurve(self.coef * np.exp(2j * np.pi * k * psi), self.n_grid)

    def table(self) -> np.ndarray:
        return np.column_stack([self.grid, self.values, self.derivative])


def correlation_modes(forcing: np.ndarray, adjoint: np.ndarray, numerics: Numerics) -> np.ndarray:
    """Modes of ``phi -> sum_j int int forcing_j(t - phi, x) adjoint_j(t, x) dt dx``."""
    w = node_weights(numerics.n_x, numerics.quad_order)
    return np.einsum("jxk,x->k", forcing * np.conj(adjoint), w)


def boundary_correlation(signal: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Modes of ``phi -> int signal(t - phi) trace(t) dt``."""
    return signal * np.conj(trace)


def phase_modes(source: np.ndarray, boundary: np.ndarray, adjoint: np.ndarray,
                transport: Transport, numerics: Numerics) -> np.ndarray:
    """Phase function of a transport pair with bulk ``source`` and boundary data.

    ``Phi(phi) = -<source(. - phi), v*> + sum_j e_j s_j(x_j^b) int g_j(t - phi) v*_j(t, x_j^b) dt``
    with ``e_j = +1`` for a boundary at x = 1 and ``-1`` at x = 0.
    """
    m = numerics.modes
    source = _fit(source, m)
    boundary = _fit(boundary, m)
    adjoint = _fit(adjoint, m)
    coef = -correlation_modes(source, adjoint, numerics)
    sign = transport.boundary_sign()
    x = numerics.x_nodes
    speeds = transport.speed_values(x)
    for j, b in enumerate(transport.bases):
        node = 0 if b == 0 else x.size - 1
        coef = coef + sign[j] * speeds[j, node] * boundary_correlation(boundary[j], adjoint[j, node])
    return coef


def _fit(coef: np.ndarray, m: int) -> np.ndarray:
    if coef.shape[-1] == m + 1:
        return coef
    out = np.zeros(coef.shape[:-1] + (m + 1,), dtype=complex)
    k = min(m, coef.shape[-1] - 1)
    out[..., : k + 1] = coef[..., : k + 1]
    return out


def phi_curve_sys(problem, u0: PeriodicField, adjoint, n_grid: int = GRID) -> PhaseCurve:
    """Phase function of a forced first-order system."""
    ustar = adjoint.u_star
    numerics = Numerics(modes=ustar.n_modes, n_x=ustar.n_x)
    source = problem.forcing_field(numerics).coef
    boundary = problem.boundary_field(numerics).coef
    coef = phase_modes(source, boundary, ustar.coef, Transport.of_system(problem), numerics)
    return PhaseCurve(coef, n_grid)


def phi_curve_eq(p2, u0: PeriodicField, adjoint, n_grid: int = GRID) -> PhaseCurve:
    """Phase function of a forced second-order equation.

    ``Phi(phi) = -<f(. - phi), u*> - int a(1)^2 g_2(t - phi) u*(t, 1) + a(0)^2 g_1(t - phi) u*_x(t, 0) dt``
    """
    ustar = adjoint.u_star
    numerics = Numerics(modes=ustar.n_modes, n_x=ustar.n_x)
    f = p2.forcing_field(numerics).coef
    g = p2.boundary_field(numerics).coef
    a0, a1 = float(p2.a(0.0)), float(p2.a(1.0))
    coef = -correlation_modes(f, ustar.coef, numerics)
    slope0 = diff_x(ustar.coef)[0, 0]
    coef = coef - a1**2 * boundary_correlation(g[1], ustar.coef[0, -1])
    coef = coef - a0**2 * boundary_correlation(g[0], slope0)
    return PhaseCurve(coef, n_grid)


def find_locked_phases(curve: PhaseCurve, tau: float) -> list[LockedPhase]:
    """All phases in [0, 1) with ``Phi(phi) = tau``, each tagged with ``Phi'``."""
    grid = curve.grid
    vals = curve(grid) - tau
    scale = max(1.0, float(np.abs(curve.coef).max()))
    if np.abs(curve.coef[1:]).max(initial=0.0) <= 1e-14 * scale and abs(curve.coef[0].real - tau) <= 1e-12 * scale:
        raise PhaseError("degenerate phase curve")
    roots = []
    ext = np.append(vals, vals[0])
    for i in range(grid.size):
        lo, hi = grid[i], grid[i] + 1.0 / grid.size
        flo, fhi = ext[i], ext[i + 1]
        if flo == 0.0:
            roots.append(lo)
        elif flo * fhi < 0.0:
            roots.append(brentq(lambda p: curve(p) - tau, lo, hi, xtol=1e-15))
    out = []
    for r in roots:
        for _ in range(3):  # polish on the trig polynomial
            d = curve.slope(r)
            if d == 0.0:
                break
            r = r - (curve(r) - tau) / d
        out.append(LockedPhase(float(r % 1.0), float(curve.slope(r))))
    out.sort(key=lambda p: p.phi)
    curve.roots[float(tau)] = out
    return out


def locking_interval(curve: PhaseCurve, phi_range: tuple[float, float] | None = None):
    """Image ``Phi([phi_-, phi_+])`` of a range on which ``Phi'`` does not vanish.

    Without a range the whole period is used and the result is
    ``[min Phi, max Phi]``; its endpoints are attained where ``Phi' = 0``.
    """
    if phi_range is None:
        fine = np.arange(1 << 14) / (1 << 14)
        vals = curve(fine)
        i_lo, i_hi = int(np.argmin(vals)), int(np.argmax(vals))
        lo = _polish_extremum(curve, fine[i_lo])
        hi = _polish_extremum(curve, fine[i_hi])
        return float(curve(lo)), float(curve(hi))
    a, b = phi_range
    if b <= a:
        raise PhaseError("empty phase range")
    fine = np.linspace(a, b, 4097)
    slopes = curve.slope(fine)
    if np.any(np.abs(slopes) <= NONDEGENERATE) or np.any(np.sign(slopes) != np.sign(slopes[0])):
        raise PhaseError("Phi' vanishes inside the phase range")
    ends = sorted([float(curve(a)), float(curve(b))])
    return ends[0], ends[1]


def _polish_extremum(curve: PhaseCurve, phi: float) -> float:
    k = np.arange(curve.coef.size)
    second = curve.coef * (-2j * np.pi * k) ** 2
    for _ in range(6):
        d2 = trig_eval(second, phi)
        if d2 == 0.0:
            break
        phi = phi - curve.slope(phi) / d2
    return phi


def normalization_eq(p2, u0: PeriodicField, ustar: PeriodicField) -> float:
    """``int int (2 u0_tt + b_3 u0_t) u* dt dx`` along the unforced solution."""
    from .secondorder import slot_derivatives

    numerics = Numerics(modes=ustar.n_modes, n_x=ustar.n_x)
    u0 = u0.truncate(numerics.modes)
    grads = slot_derivatives(p2, u0, numerics)
    from .charops import to_modes, to_phys

    ut = u0.dt()
    utt = ut.dt()
    b3 = grads[1]
    integrand = 2.0 * utt.coef + to_modes(b3 * to_phys(ut.coef, numerics), numerics)
    w = node_weights(numerics.n_x, numerics.quad_order)
    per = integrand[..., 0].real * ustar.coef[..., 0].real + 2.0 * (
        integrand[..., 1:] * np.conj(ustar.coef[..., 1:])
    ).real.sum(-1)
    return float((per * w).sum())


def formal_phase_check(p2, u0: PeriodicField, adjoint, phi: float, tau: float) -> float:
    """Defect of the formally derived phase relation at ``(phi, tau)``.

    Left side ``int int (f(t - phi) + tau (2 u0_tt + b_3 u0_t)) u*``, right side
    ``-int a(1)^2 g_2(t - phi) u*(t, 1) + a(0)^2 g_1(t - phi) u*_x(t, 0) dt``.
    """
    ustar = adjoint.u_star
    numerics = Numerics(modes=ustar.n_modes, n_x=ustar.n_x)
    f = p2.forcing_field(numerics).coef
    g = p2.boundary_field(numerics).coef
    lhs = float(trig_eval(correlation_modes(f, ustar.coef, numerics), phi))
    lhs += tau * normalization_eq(p2, u0, ustar)
    a0, a1 = float(p2.a(0.0)), float(p2.a(1.0))
    slope0 = diff_x(ustar.coef)[0, 0]
    rhs = -float(
        trig_eval(a1**2 * boundary_correlation(g[1], ustar.coef[0, -1])
                  + a0**2 * boundary_correlation(g[0], slope0), phi)
    )
    return abs(lhs - rhs)
