"""Second-order equations through their first-order form.

For ``(1/T^2) u_tt - a^2 u_xx + b(x, u, u_t/T, u_x) = eps f`` the variables

    v1 = u_t/T + a u_x,    v2 = u_t/T - a u_x

travel with speeds ``-a`` and ``+a``.  ``u`` is recovered as
``u = eps g1 + J v`` with ``J v = (1/2) int_0^x (v1 - v2)/a``, and

    K v = (v1 + v2)/2 = u_t/T,    L v = (v1 - v2)/(2a) = u_x.

Both components obey ``(1/T) d_t v_j + s_j d_x v_j + B(eps, v) = eps f`` with

    B(eps, v) = b(x, eps g1 + J v, K v, L v) + (a'/2)(v1 - v2).

Boundary conditions: ``v1 = -v2 + 2 eps g1'/T`` at x = 0 and
``v2 = v1 + gamma a(1) int_0^1 (v1 - v2)/a dy + eps (2 gamma a(1) g1 - 2 a(1) g2)``
at x = 1.  The integral term is the nonlocal boundary operator whose
transport along characteristics is ``E``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from ._grid import cumulative_matrix, diff_x, node_weights
from .adjoint import GAP_MIN, PAIRING_MIN, AdjointError, AdjointSolution, null_direction
from .charops import Characteristics, Transport, _fit_modes, _shift, pairing, to_modes, to_phys, transport_derivative
from .field import BoundarySignal, Numerics, PeriodicField
from .linsolve import MARGIN_TOL, NonResonanceReport, field_shape
from .phase import PhaseCurve, boundary_correlation, correlation_modes, normalization_eq, phase_modes
from .problem import SecondOrderProblem

FOS_NUMERICS = Numerics(modes=16, n_x=65)


def _neg(fn: Callable) -> Callable:
    return lambda x: -np.asarray(fn(x), dtype=float)


def fos_transport(p2: SecondOrderProblem) -> Transport:
    """Speeds ``(-a, a)``, boundaries at x = 0 and x = 1, reflections ``(-1, 1)``."""
    return Transport((_neg(p2.a), p2.a), (_neg(p2.da), p2.da), (0, 1), (-1.0, 1.0))


def fos_adjoint_transport(p2: SecondOrderProblem) -> Transport:
    """Adjoint pair: ``w1(t,1) = w2(t,1)`` and ``w2(t,0) = -w1(t,0)``."""
    return Transport((_neg(p2.a), p2.a), (_neg(p2.da), p2.da), (1, 0), (1.0, -1.0))


def _boundary_coef(signal, m: int) -> np.ndarray:
    if signal is None:
        return np.zeros(m + 1, dtype=complex)
    if isinstance(signal, BoundarySignal):
        signal = signal.coef
    return _fit_modes(np.asarray(signal, dtype=complex), m)


def _dt(coef: np.ndarray) -> np.ndarray:
    return coef * (2j * np.pi * np.arange(coef.shape[-1]))


# ---------------------------------------------------------------------------
# the transformation and its inverse
# ---------------------------------------------------------------------------


def to_first_order(u: PeriodicField, T: float, p2: SecondOrderProblem | None = None, speed=None) -> PeriodicField:
    """``(v1, v2) = (u_t/T + a u_x, u_t/T - a u_x)``.

    The speed comes from ``p2`` or is given directly (scalar or nodal values).
    """
    if speed is None:
        speed = np.asarray(p2.a(u.x_nodes), dtype=float) * np.ones(u.n_x)
    speed = np.broadcast_to(np.asarray(speed, dtype=float), (u.n_x,))
    ut = _dt(u.coef[0]) / T
    ux = diff_x(u.coef[0], axis=0)
    au = speed[:, None] * ux
    return u.like(np.stack([ut + au, ut - au]))


def integrate_x(values: np.ndarray, numerics: Numerics) -> np.ndarray:
    """``int_0^x`` of nodal data along the x axis (second to last)."""
    mat = cumulative_matrix(numerics.n_x, numerics.quad_order)
    return np.einsum("ij,...jk->...ik", mat, values)


def from_first_order(v: PeriodicField, eps: float, g1, p2: SecondOrderProblem | None = None,
                     speed=None, numerics: Numerics | None = None) -> PeriodicField:
    """``u = eps g1 + (1/2) int_0^x (v1 - v2)/a dy``."""
    numerics = numerics or Numerics(modes=v.n_modes, n_x=v.n_x)
    if speed is None:
        speed = np.asarray(p2.a(v.x_nodes), dtype=float) * np.ones(v.n_x)
    speed = np.broadcast_to(np.asarray(speed, dtype=float), (v.n_x,))
    diff = (v.coef[0] - v.coef[1]) / speed[:, None]
    u = 0.5 * integrate_x(diff, numerics) + eps * _boundary_coef(g1, v.n_modes)[None, :]
    return v.like(u[None])


# ---------------------------------------------------------------------------
# the first-order form as a residual/operator provider
# ---------------------------------------------------------------------------


class FOSContext:
    """First-order form of a second-order problem around the unforced ``u0``.

    Offers the same interface as the system form (residuals, linearization,
    phase derivative, characteristics) so the adjoint, phase and locking code
    can run on it unchanged.
    """

    n_components = 2

    def __init__(self, p2: SecondOrderProblem, numerics: Numerics, u0: PeriodicField | None = None):
        self.p2 = p2
        self.problem = p2
        self.numerics = numerics
        self.transport = fos_transport(p2)
        self.x = numerics.x_nodes
        self.speed = self.transport.speed_values(self.x)
        self.a = np.asarray(p2.a(self.x), dtype=float) * np.ones(self.x.size)
        self.da = np.asarray(p2.da(self.x), dtype=float) * np.ones(self.x.size)
        self.a_left = float(p2.a(0.0))
        self.a_right = float(p2.a(1.0))
        self.gamma = p2.gamma
        self.scalar_u0 = u0.truncate(numerics.modes) if u0 is not None else None
        self.u0 = to_first_order(self.scalar_u0, 1.0, speed=self.a) if u0 is not None else None
        self._chars: dict = {}

    # data ---------------------------------------------------------------
    @cached_property
    def forcing(self) -> np.ndarray:
        return self.p2.forcing_field(self.numerics).coef[0]

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.p2.boundary_field(self.numerics).coef

    @cached_property
    def weights(self) -> np.ndarray:
        return node_weights(self.numerics.n_x, self.numerics.quad_order)

    def source(self, eps, period, phi: float = 0.0) -> np.ndarray:
        f = eps * _shift(self.forcing, -phi)
        return np.stack([f, f])

    def boundary_data(self, eps, period, phi: float = 0.0) -> np.ndarray:
        g1, g2 = _shift(self.boundary, -phi)
        a1 = self.a_right
        return eps * np.stack([2.0 * _dt(g1) / period, 2.0 * self.gamma * a1 * g1 - 2.0 * a1 * g2])

    def boundary_nonlocal(self, v: np.ndarray) -> np.ndarray:
        """``(0, gamma a(1) int_0^1 (v1 - v2)/a dy)``."""
        diff = (v[..., 0, :, :] - v[..., 1, :, :]) / self.a[:, None]
        total = np.einsum("j,...jk->...k", self.weights, diff)
        return np.stack([np.zeros_like(total), self.gamma * self.a_right * total], axis=-2)

    # slots of b -----------------------------------------------------------
    def slot_coef(self, eps, v, phi: float = 0.0):
        """Modes of ``(eps g1 + J v, K v, L v)``."""
        diff = (v[..., 0, :, :] - v[..., 1, :, :]) / self.a[:, None]
        g1 = _shift(self.boundary[0], -phi)
        u = 0.5 * integrate_x(diff, self.numerics) + eps * g1
        p = 0.5 * (v[..., 0, :, :] + v[..., 1, :, :])
        q = 0.5 * diff
        return u, p, q

    def slots(self, eps, v, phi: float = 0.0) -> np.ndarray:
        """Values of the three slots on the physical grid, shape (3, ..., N_x, P)."""
        return np.stack([to_phys(s, self.numerics) for s in self.slot_coef(eps, v, phi)])

    def gradient_at(self, eps, v, phi: float = 0.0) -> np.ndarray:
        s = self.slots(eps, v, phi)
        return np.asarray(self.p2.grad(self.x[:, None], s[0], s[1], s[2]), dtype=float)

    def nonlinearity(self, eps, v, phi: float = 0.0) -> np.ndarray:
        """Values of ``B(eps, v)`` on the physical grid (same for both components)."""
        s = self.slots(eps, v, phi)
        bvals = np.asarray(self.p2.b(self.x[:, None], s[0], s[1], s[2]), dtype=float)
        vv = to_phys(v, self.numerics)
        return bvals * np.ones_like(s[0]) + 0.5 * self.da[:, None] * (vv[..., 0, :, :] - vv[..., 1, :, :])

    @cached_property
    def gradient0(self) -> np.ndarray:
        return self.gradient_at(0.0, self.u0.coef)

    @cached_property
    def beta0(self) -> np.ndarray:
        """``beta0_1 = (a' + b_p + b_q/a)/2``, ``beta0_2 = (-a' + b_p - b_q/a)/2`` as modes."""
        _, bp, bq = self.gradient0
        da = self.da[:, None]
        a = self.a[:, None]
        vals = np.stack([0.5 * (da + bp + bq / a), 0.5 * (-da + bp - bq / a)])
        return to_modes(vals, self.numerics)

    def chars(self, period: float, beta=None) -> Characteristics:
        if beta is None:
            key = float(period)
            if key not in self._chars:
                self._chars[key] = Characteristics(self.transport, period, self.beta0, self.numerics)
            return self._chars[key]
        return Characteristics(self.transport, period, beta, self.numerics)

    def apply_B(self, beta, v, eps: float = 0.0, phi: float = 0.0) -> np.ndarray:
        """``beta_j v_j - B(eps, v)``."""
        bet = to_phys(_fit_modes(beta, self.numerics.modes), self.numerics)
        vv = to_phys(v, self.numerics)
        nl = self.nonlinearity(eps, v, phi)
        return to_modes(bet * vv - nl[..., None, :, :], self.numerics)

    def coupling(self, w, grad=None, beta=None) -> np.ndarray:
        """``d_v B(beta, v) w = beta w - (b_u J w + b_p K w + b_q L w + (a'/2)(w1 - w2))``."""
        grad = self.gradient0 if grad is None else grad
        beta = self.beta0 if beta is None else beta
        slots = self.slots(0.0, w)
        ww = to_phys(w, self.numerics)
        lin = grad[0] * slots[0] + grad[1] * slots[1] + grad[2] * slots[2]
        lin = lin + 0.5 * self.da[:, None] * (ww[..., 0, :, :] - ww[..., 1, :, :])
        bet = to_phys(_fit_modes(beta, self.numerics.modes), self.numerics)
        return to_modes(bet * ww - lin[..., None, :, :], self.numerics)

    # residuals ------------------------------------------------------------
    def residual_abstract(self, eps, period, v, beta=None, phi: float = 0.0) -> np.ndarray:
        """``v - C(R v + N v + g) - D(B(beta, v) + eps f)``."""
        ch = self.chars(period, beta)
        beta = self.beta0 if beta is None else beta
        w = ch.reflect(v) + self.boundary_nonlocal(v) + self.boundary_data(eps, period, phi)
        return v - ch.apply_C(w) - ch.apply_D(self.apply_B(beta, v, eps, phi) + self.source(eps, period, phi))

    def residual_pde(self, eps, period, v, phi: float = 0.0):
        """Two transport residuals and the two boundary residuals."""
        nl = to_modes(self.nonlinearity(eps, v, phi), self.numerics)
        bulk = transport_derivative(v, period, self.speed) + nl[..., None, :, :] - self.source(eps, period, phi)
        g = self.boundary_data(eps, period, phi)
        nonlocal_term = self.boundary_nonlocal(v)
        left = v[..., 0, 0, :] + v[..., 1, 0, :] - g[..., 0, :]
        right = v[..., 1, -1, :] - v[..., 0, -1, :] - nonlocal_term[..., 1, :] - g[..., 1, :]
        return bulk, np.stack([left, right], axis=-2)

    def apply_E(self, period, beta, v) -> np.ndarray:
        return self.chars(period, beta).apply_C(self.boundary_nonlocal(v))

    def apply_linearized(self, period, w, grad=None, beta=None) -> np.ndarray:
        """``(I - C(R + N) - D d_v B) w``."""
        ch = self.chars(period, beta)
        return w - ch.apply_C(ch.reflect(w) + self.boundary_nonlocal(w)) - ch.apply_D(self.coupling(w, grad, beta))

    def linearization(self, period, state, eps: float = 0.0, phi: float = 0.0) -> Callable:
        grad = self.gradient_at(eps, state, phi)
        return lambda w: self.apply_linearized(period, w, grad)

    def residual_phase_derivative(self, eps, period, v, phi: float = 0.0) -> np.ndarray:
        ch = self.chars(period)
        k = np.arange(self.numerics.modes + 1)
        ddt = -2j * np.pi * k
        # B depends on phi through eps g1(t - phi) in the u-slot
        bu = self.gradient_at(eps, v, phi)[0]
        dg1 = to_phys(ddt * _shift(self.boundary[0], -phi), self.numerics)
        d_nl = to_modes(bu * eps * dg1, self.numerics)
        return -ch.apply_C(ddt * self.boundary_data(eps, period, phi)) - ch.apply_D(
            ddt * self.source(eps, period, phi) - np.stack([d_nl, d_nl])
        )

    def apply_A(self, period, v) -> np.ndarray:
        bet = to_phys(self.beta0, self.numerics)
        return transport_derivative(v, period, self.speed) + to_modes(bet * to_phys(v, self.numerics), self.numerics)

    def reconstruct(self, eps, v: np.ndarray, phi: float = 0.0) -> PeriodicField:
        """Second-order solution ``eps g1(t - phi) + J v``."""
        u = self.slot_coef(eps, v, phi)[0]
        return PeriodicField(u[None], self.x)


def assemble_fos_nonlinearity(ctx: FOSContext, eps: float, v: PeriodicField) -> PeriodicField:
    """``B(eps, v)`` in both components."""
    vals = ctx.nonlinearity(eps, v.coef)
    coef = to_modes(vals, ctx.numerics)
    return v.like(np.stack([coef, coef]))


def apply_E(ctx: FOSContext, T: float, beta, v: PeriodicField) -> PeriodicField:
    """``C(beta, T)`` applied to the nonlocal boundary term ``(0, gamma a(1) int (v1 - v2)/a)``."""
    beta = beta.coef if isinstance(beta, PeriodicField) else beta
    return v.like(ctx.apply_E(T, beta, v.coef))


@dataclass
class FOSResidual:
    bulk: PeriodicField
    boundary: BoundarySignal

    @property
    def sup(self) -> float:
        return max(self.bulk.sup_norm(), self.boundary.sup_norm())


def residual_fos(eps: float, T: float, v: PeriodicField, ctx: FOSContext) -> FOSResidual:
    bulk, edge = ctx.residual_pde(eps, T, v.coef)
    return FOSResidual(v.like(bulk), BoundarySignal(edge))


def residual_eq(eps: float, T: float, u: PeriodicField, p2: SecondOrderProblem):
    """Residual of the second-order equation and its two boundary conditions."""
    num = Numerics(modes=u.n_modes, n_x=u.n_x)
    x = u.x_nodes
    a = np.asarray(p2.a(x), dtype=float) * np.ones(x.size)
    c = u.coef[0]
    ut = _dt(c) / T
    utt = _dt(ut) / T
    ux = diff_x(c, axis=0)
    uxx = diff_x(ux, axis=0)
    vals = np.asarray(p2.b(x[:, None], to_phys(c, num), to_phys(ut, num), to_phys(ux, num)), dtype=float)
    f = p2.forcing_field(num).coef[0]
    g = p2.boundary_field(num).coef
    bulk = utt - (a**2)[:, None] * uxx + to_modes(vals * np.ones((x.size, num.n_phys)), num) - eps * f
    left = c[0] - eps * g[0]
    right = ux[-1] + p2.gamma * c[-1] - eps * g[1]
    return u.like(bulk[None]), BoundarySignal(np.stack([left, right]))


# ---------------------------------------------------------------------------
# non-resonance
# ---------------------------------------------------------------------------


def travel_integral(p2: SecondOrderProblem, x) -> np.ndarray:
    """``alpha(0, x) = int_0^x dz / a(z)``."""
    return fos_transport(p2).travel(x)[1]


def nonres_integrals(p2: SecondOrderProblem, beta: np.ndarray, numerics: Numerics, t) -> np.ndarray:
    """The two integrals of ``(beta0_1 + beta0_2)/a`` along the shifted characteristics.

    Row 0: ``int beta0_1(t + alpha(x,1), x) + beta0_2(t - alpha(x,1), x)``,
    row 1: ``int beta0_1(t - alpha(0,x), x) + beta0_2(t + alpha(0,x), x)``, both over ``a(x) dx``.
    """
    x = numerics.x_nodes
    a = np.asarray(p2.a(x), dtype=float) * np.ones(x.size)
    w = node_weights(numerics.n_x, numerics.quad_order)
    al0 = travel_integral(p2, x)
    al1 = al0[-1] - al0
    k = np.arange(numerics.modes + 1)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = []
    for shift in (al1, -al0):
        c1 = beta[0] * np.exp(2j * np.pi * np.outer(shift, k))
        c2 = beta[1] * np.exp(-2j * np.pi * np.outer(shift, k))
        modes = np.einsum("x,xk->k", w / a, c1 + c2)
        e = np.exp(2j * np.pi * np.outer(t, k))
        wt = np.full(k.size, 2.0)
        wt[0] = 1.0
        out.append((e * (wt * modes)).real.sum(-1))
    return np.stack(out)


def check_nonres_eq(p2: SecondOrderProblem, u0: PeriodicField, numerics: Numerics | None = None,
                    tolerance: float = MARGIN_TOL) -> NonResonanceReport:
    """Margins ``min_t |integral|`` of the two second-order non-resonance conditions.

    The boundary-trace iteration of the first-order form integrates ``v1``
    from x = 0 against its direction of travel, so its round-trip factor is
    ``exp(+integral)``; the contraction data are reported in that orientation,
    which makes the report identical to the system report of the first-order
    form.
    """
    numerics = numerics or Numerics(modes=u0.n_modes, n_x=u0.n_x)
    ctx = FOSContext(p2, numerics, u0)
    n = max(8 * numerics.modes, 256)
    t = np.arange(n) / n
    vals = nonres_integrals(p2, ctx.beta0, numerics, t)
    margins, cplus, cminus, routes = [], [], [], []
    for row in vals:
        logq = row
        margins.append(float(np.abs(row).min()))
        cplus.append(float(np.exp(logq.max())))
        cminus.append(float(np.exp(logq.min())))
        if margins[-1] <= tolerance:
            routes.append(None)
        elif cplus[-1] < 1.0:
            routes.append("contract")
        elif cminus[-1] > 1.0:
            routes.append("expand")
        else:
            routes.append(None)
    return NonResonanceReport(tuple(margins), tuple(cplus), tuple(cminus), tuple(routes), tolerance, n)


# ---------------------------------------------------------------------------
# the adjoint problem
# ---------------------------------------------------------------------------


class FOSAdjoint:
    """Integral form of the adjoint of the linearized first-order form.

    ``d_t w + s d_x w + (s' - beta0) w = K* w`` with

        K*_1 w = beta0_1 w2 + (1/2a) int_x^1 b_u (w1 + w2) dy + gamma a(1)^2 w2(t,1)/a
        K*_2 w = beta0_2 w1 - (1/2a) int_x^1 b_u (w1 + w2) dy - gamma a(1)^2 w2(t,1)/a

    and ``w1 = w2`` at x = 1, ``w1 + w2 = 0`` at x = 0.
    """

    def __init__(self, ctx: FOSContext):
        self.ctx = ctx
        num = ctx.numerics
        self.transport = fos_adjoint_transport(ctx.p2)
        dspeed = self.transport.dspeed_values(num.x_nodes)
        beta = -ctx.beta0.copy()
        beta[..., 0] += dspeed
        self.beta = beta
        self.chars = Characteristics(self.transport, 1.0, beta, num)
        self.grad = ctx.gradient0
        self.beta_vals = to_phys(ctx.beta0, num)

    def _tail(self, w: np.ndarray) -> np.ndarray:
        """``(1/2a) int_x^1 b_u (w1 + w2) dy + gamma a(1)^2 w2(t,1)/a`` as modes."""
        ctx = self.ctx
        num = ctx.numerics
        s = to_phys(w[..., 0, :, :] + w[..., 1, :, :], num)
        prod = to_modes(self.grad[0] * s, num)
        total = np.einsum("j,...jk->...k", ctx.weights, prod)
        tail = total[..., None, :] - integrate_x(prod, num)
        edge = ctx.gamma * ctx.a_right**2 * w[..., 1, -1, :]
        return (0.5 * tail + edge[..., None, :]) / ctx.a[:, None]

    def coupling(self, w: np.ndarray) -> np.ndarray:
        num = self.ctx.numerics
        ww = to_phys(w, num)
        cross = to_modes(np.stack([self.beta_vals[0] * ww[..., 1, :, :], self.beta_vals[1] * ww[..., 0, :, :]],
                                  axis=-3), num)
        tail = self._tail(w)
        return cross + np.stack([tail, -tail], axis=-3)

    def apply(self, w: np.ndarray) -> np.ndarray:
        ch = self.chars
        return w - ch.apply_C(ch.reflect(w)) - ch.apply_D(self.coupling(w))

    def residual_pde(self, w: np.ndarray):
        ctx = self.ctx
        num = ctx.numerics
        dspeed = self.transport.dspeed_values(num.x_nodes)
        bet = to_modes(self.beta_vals * to_phys(w, num), num)
        bulk = transport_derivative(w, 1.0, ctx.speed) + dspeed[..., None] * w - bet - self.coupling(w)
        left = w[0, 0] + w[1, 0]
        right = w[0, -1] - w[1, -1]
        return bulk, np.stack([left, right])


@dataclass
class EquationAdjoint:
    """Adjoint data of a second-order problem.

    ``u_star`` and ``u_tilde`` are scalar fields with ``v*_1 = (u* - u~)/2``,
    ``v*_2 = (u* + u~)/2``; ``system`` holds the first-order adjoint ``v*``.
    """

    u_star: PeriodicField
    u_tilde: PeriodicField
    system: AdjointSolution
    difference_defect: float
    normalization_eq: float
    extras: dict = field(default_factory=dict)

    @property
    def v_star(self) -> PeriodicField:
        return self.system.u_star


def solve_adjoint_eq(p2: SecondOrderProblem, u0: PeriodicField, numerics: Numerics | None = None,
                     ctx: FOSContext | None = None) -> EquationAdjoint:
    """Adjoint of the first-order form, normalized by ``sum_j <d_t v0_j, v*_j> = 1``."""
    numerics = numerics or FOS_NUMERICS
    ctx = ctx or FOSContext(p2, numerics, u0)
    adj = FOSAdjoint(ctx)
    tangent = _dt(ctx.u0.coef)
    raw, value, sv = null_direction(adj.apply, field_shape(2, numerics), tangent, numerics)
    if sv.gap <= GAP_MIN:
        raise AdjointError("adjoint kernel not numerically simple")
    if abs(value) < PAIRING_MIN:
        raise AdjointError("non-transversal kernel (keradeq fails)")
    vstar = raw / value
    bulk, edge = adj.residual_pde(vstar)
    system = AdjointSolution(
        PeriodicField(vstar, ctx.x), float(value), float(sv.gap), sv.values,
        PeriodicField(bulk, ctx.x).sup_norm(), BoundarySignal(edge).sup_norm(),
    )
    ustar = vstar[0] + vstar[1]
    utilde = vstar[1] - vstar[0]
    predicted = adjoint_difference(ctx, ustar)
    defect = float(np.abs(PeriodicField((utilde - predicted)[None], ctx.x).values()).max())
    ustar_field = PeriodicField(ustar[None], ctx.x)
    norm_eq = normalization_eq(p2, ctx.scalar_u0, ustar_field)
    return EquationAdjoint(ustar_field, PeriodicField(utilde[None], ctx.x), system, defect, norm_eq)


def adjoint_difference(ctx: FOSContext, ustar: np.ndarray) -> np.ndarray:
    """``(1/a) int_x^1 (d_t u* - b_p u*) dy`` along ``u0``."""
    num = ctx.numerics
    bp = ctx.gradient0[1]
    integrand = _dt(ustar) - to_modes(bp * to_phys(ustar, num), num)
    total = np.einsum("j,jk->k", ctx.weights, integrand)
    return (total[None, :] - integrate_x(integrand, num)) / ctx.a[:, None]


def slot_derivatives(p2: SecondOrderProblem, u0: PeriodicField, numerics: Numerics) -> np.ndarray:
    """``(b_u, b_p, b_q)`` along ``u0`` on the physical grid."""
    c = u0.coef[0]
    x = u0.x_nodes
    vals = [to_phys(c, numerics), to_phys(_dt(c), numerics), to_phys(diff_x(c, axis=0), numerics)]
    return np.asarray(p2.grad(x[:, None], *vals), dtype=float) * np.ones((3, x.size, numerics.n_phys))


# ---------------------------------------------------------------------------
# the phase function through the first-order form
# ---------------------------------------------------------------------------


def phi_curve_fos(ctx: FOSContext, adjoint: EquationAdjoint, n_grid: int = 512) -> PhaseCurve:
    """Phase function of the first-order form.

    The forcing enters the first-order form through ``eps f`` in both
    components, the boundary data and the u-slot of ``b``; the last gives the
    bulk term ``-b_u g1(t - phi)``.
    """
    num = ctx.numerics
    vstar = adjoint.v_star.coef
    source = np.stack([ctx.forcing, ctx.forcing])
    boundary = ctx.boundary_data(1.0, 1.0)
    coef = phase_modes(source, boundary, vstar, ctx.transport, num)
    # -<-b_u g1(. - phi), v1* + v2*>: correlate g1 with int b_u u* dx
    ustar = vstar[0] + vstar[1]
    weighted = to_modes(ctx.gradient0[0] * to_phys(ustar, num), num)
    profile = np.einsum("x,xk->k", ctx.weights, weighted)
    coef = coef + boundary_correlation(ctx.boundary[0], profile)
    return PhaseCurve(coef, n_grid)


def fos_lock_context(p2: SecondOrderProblem, u0: PeriodicField, numerics: Numerics | None = None):
    """Locking context running on the first-order form; the curve is the first-order one."""
    from .locking import LockContext

    numerics = numerics or FOS_NUMERICS
    ctx = FOSContext(p2, numerics, u0)
    adj = solve_adjoint_eq(p2, u0, numerics, ctx)
    curve = phi_curve_fos(ctx, adj)
    lock = LockContext(ctx, adj.system, curve)
    lock.equation_adjoint = adj
    return lock
