"""Integration along characteristics.

A transport pair moves component j with speed s_j(x); its boundary value is
prescribed at the node ``x_j^b`` (0 or 1) as ``rho_j`` times the other
component there.  With the travel time ``A_j(x) = int_0^x dz / s_j`` and the
characteristic frame ``tau = t - A_j(x)/T`` every operator below becomes a
cumulative x-integral of a function of ``tau``:

    G_j(tau, y) = int_{x_b}^y beta_j(tau + A_j(z)/T, z) / s_j(z) dz
    [C w]_j     = exp(-G_j(tau, x)) w_j(tau + A_j(x_b)/T)
    [D u]_j     = exp(-G_j(tau, x)) int_{x_b}^x exp(G_j(tau, y)) u_j(tau + A_j(y)/T, y) / s_j(y) dy

The frame change is a diagonal multiplier on Fourier modes, so all time shifts
are exact; only the x-integrals are approximated (piecewise Lagrange rule).
All array methods accept arbitrary leading batch axes in front of
``(2, N_x, M+1)`` coefficient arrays.
"""
from __future__ import annotations

from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import fixed_quad, quad

from . import kernels
from ._grid import cell_rule, diff_x, grid_to_modes, modes_to_grid, node_weights
from .field import BoundarySignal, Numerics, PeriodicField
from .problem import SystemProblem, beta0

# ---------------------------------------------------------------------------
# transport geometry
# ---------------------------------------------------------------------------


class Transport:
    """Speeds, boundary nodes and reflection factors of a 2x2 transport pair."""

    def __init__(
        self,
        speeds: Sequence[Callable],
        dspeeds: Sequence[Callable],
        bases: Sequence[int],
        reflection: Sequence[float],
    ):
        self.speeds = tuple(speeds)
        self.dspeeds = tuple(dspeeds)
        self.bases = tuple(int(b) for b in bases)
        if set(self.bases) - {0, 1}:
            raise ValueError("boundary nodes must be 0 or 1")
        self.reflection = np.array(reflection, dtype=float)
        self._tables: dict = {}

    @classmethod
    def of_system(cls, problem: SystemProblem) -> "Transport":
        return cls(problem.speeds, problem.dspeeds, (0, 1), problem.reflection)

    @classmethod
    def adjoint_of_system(cls, problem: SystemProblem) -> "Transport":
        """Transport of the formally adjoint system (bases swapped)."""
        r1, r2 = problem.reflection
        a1, a2 = problem.speeds
        rho1 = -r2 * float(a2(1.0)) / float(a1(1.0))
        rho2 = -r1 * float(a1(0.0)) / float(a2(0.0))
        return cls(problem.speeds, problem.dspeeds, (1, 0), (rho1, rho2))

    def speed_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(s(x), dtype=float), x.shape) for s in self.speeds])

    def dspeed_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(s(x), dtype=float), x.shape) for s in self.dspeeds])

    def travel(self, x_nodes) -> np.ndarray:
        """``A_j(x_i) = int_0^{x_i} dz / s_j(z)``, shape (2, N_x)."""
        x_nodes = np.asarray(x_nodes, dtype=float)
        key = (x_nodes.size, float(x_nodes[0]), float(x_nodes[-1]))
        if key not in self._tables:
            out = np.zeros((2, x_nodes.size))
            for j, s in enumerate(self.speeds):
                cells = [
                    quad(lambda z: 1.0 / float(s(z)), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
                    for lo, hi in zip(x_nodes[:-1], x_nodes[1:])
                ]
                out[j, 1:] = np.cumsum(cells)
            out.flags.writeable = False
            self._tables[key] = out
        return self._tables[key]

    def alpha(self, j: int, x: float, y: float) -> float:
        """``alpha_j(x, y) = int_x^y dz / s_j(z)`` for component ``j`` in {1, 2}."""
        s = self.speeds[j - 1]
        if x == y:
            return 0.0
        return quad(lambda z: 1.0 / float(s(z)), x, y, epsabs=1e-14, epsrel=1e-13)[0]

    def boundary_sign(self) -> np.ndarray:
        """+1 where the prescribed boundary is x = 1, -1 where it is x = 0."""
        return np.array([1.0 if b == 1 else -1.0 for b in self.bases])


# ---------------------------------------------------------------------------
# the operators C and D on a fixed (T, beta)
# ---------------------------------------------------------------------------


class Characteristics:
    """Operators ``C(T, beta)``, ``D(T, beta)`` and ``R`` for one transport pair."""

    def __init__(self, transport: Transport, period: float, beta, numerics: Numerics):
        if period <= 0:
            raise ValueError("the period must be positive")
        self.transport = transport
        self.period = float(period)
        self.numerics = numerics
        self.m = numerics.modes
        self.n_phys = numerics.n_phys
        x = numerics.x_nodes
        self.x_nodes = x
        self.nx = x.size
        self.h = 1.0 / (self.nx - 1)
        self.starts, self.weights = cell_rule(self.nx, numerics.quad_order)
        self.base_nodes = tuple(0 if b == 0 else self.nx - 1 for b in transport.bases)
        self.speed = transport.speed_values(x)
        travel = transport.travel(x)
        k = np.arange(self.m + 1)
        self.frame = np.exp(2j * np.pi * travel[:, :, None] * k / self.period)
        self.base_frame = np.stack([self.frame[j, self.base_nodes[j]] for j in range(2)])
        self.travel_values = travel
        beta_coef = beta.coef if isinstance(beta, PeriodicField) else np.asarray(beta)
        if beta_coef is None or not np.any(beta_coef):
            self.log_kernel = np.zeros((2, self.nx, self.n_phys))
        else:
            beta_coef = _fit_modes(beta_coef, self.m)
            integrand = beta_coef * self.frame / self.speed[:, :, None]
            g = np.empty_like(integrand)
            for j in range(2):
                re = np.ascontiguousarray(integrand[j].real)
                im = np.ascontiguousarray(integrand[j].imag)
                base = self.transport.bases[j]
                g[j] = kernels.cumulative(re, self.starts, self.weights, self.h, base) + 1j * (
                    kernels.cumulative(im, self.starts, self.weights, self.h, base)
                )
            self.log_kernel = modes_to_grid(g, self.n_phys)
        self.exp_g = np.exp(self.log_kernel)
        self.exp_mg = 1.0 / self.exp_g

    # boundary transfer ------------------------------------------------
    def reflect(self, u: np.ndarray) -> np.ndarray:
        """``(R u)_j = rho_j u_{other}(t, x_j^b)``, shape (..., 2, M+1)."""
        rho = self.transport.reflection
        b0, b1 = self.base_nodes
        return np.stack([rho[0] * u[..., 1, b0, :], rho[1] * u[..., 0, b1, :]], axis=-2)

    def apply_C(self, w: np.ndarray) -> np.ndarray:
        wf = modes_to_grid(w * self.base_frame, self.n_phys)
        prod = wf[..., :, None, :] * self.exp_mg
        return grid_to_modes(prod, self.m) * np.conj(self.frame)

    def apply_D(self, u: np.ndarray) -> np.ndarray:
        uf = modes_to_grid(u * self.frame, self.n_phys) / self.speed[:, :, None]
        out = np.empty_like(uf)
        for j in range(2):
            out[..., j, :, :] = kernels.char_sweep(
                np.ascontiguousarray(uf[..., j, :, :]), self.exp_g[j], self.starts,
                self.weights, self.h, self.transport.bases[j],
            )
        return grid_to_modes(out, self.m) * np.conj(self.frame)

    # pieces used by the boundary-trace solver ---------------------------
    def far_end(self, j: int) -> int:
        """Node where component ``j`` meets the other component's boundary."""
        return self.base_nodes[1 - j]

    def far_multiplier(self, j: int) -> np.ndarray:
        """``c_j(t, x_far, x_b)`` on the physical t-grid."""
        node = self.far_end(j)
        gm = grid_to_modes(self.log_kernel[j, node], self.m) * np.conj(self.frame[j, node])
        return np.exp(-modes_to_grid(gm, self.n_phys))

    def far_shift(self, j: int) -> float:
        """Time shift ``(A_j(x_b) - A_j(x_far)) / T`` along component ``j``."""
        tr = self.travel_values[j]
        return (tr[self.base_nodes[j]] - tr[self.far_end(j)]) / self.period


def _fit_modes(coef: np.ndarray, m: int) -> np.ndarray:
    if coef.shape[-1] == m + 1:
        return coef
    out = np.zeros(coef.shape[:-1] + (m + 1,), dtype=complex)
    k = min(m, coef.shape[-1] - 1)
    out[..., : k + 1] = coef[..., : k + 1]
    return out


def to_phys(coef: np.ndarray, numerics: Numerics) -> np.ndarray:
    return modes_to_grid(coef, numerics.n_phys)


def to_modes(values: np.ndarray, numerics: Numerics) -> np.ndarray:
    return grid_to_modes(values, numerics.modes)


def numerics_of(u: PeriodicField, base: Numerics | None = None) -> Numerics:
    """Numerics matching the discretization carried by ``u``."""
    if base is not None and base.modes == u.n_modes and base.n_x == u.n_x:
        return base
    base = base or Numerics()
    return base.with_(modes=u.n_modes, n_x=u.n_x)


def transport_derivative(coef: np.ndarray, period: float, speed: np.ndarray) -> np.ndarray:
    """``(1/T) d_t u + s d_x u`` on coefficients."""
    k = np.arange(coef.shape[-1])
    return coef * (2j * np.pi * k / period) + speed[..., None] * diff_x(coef)


# ---------------------------------------------------------------------------
# the system (1/T) u_t + a u_x + b(x, u) = eps f with reflections
# ---------------------------------------------------------------------------


class SystemForm:
    """Discretized operators of a first-order system around an unforced solution.

    Holds the problem, the discretization and (optionally) the unforced
    solution ``u0``; ``beta0`` and the Jacobian ``b_jk`` along ``u0`` are
    precomputed on the physical grid.
    """

    n_components = 2

    def __init__(self, problem: SystemProblem, numerics: Numerics, u0: PeriodicField | None = None):
        self.problem = problem
        self.numerics = numerics
        self.transport = Transport.of_system(problem)
        self.x = numerics.x_nodes
        self.speed = self.transport.speed_values(self.x)
        self.u0 = u0.truncate(numerics.modes) if u0 is not None else None
        self._chars: dict = {}

    # data ---------------------------------------------------------------
    @cached_property
    def forcing(self) -> np.ndarray:
        return self.problem.forcing_field(self.numerics).coef

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.problem.boundary_field(self.numerics).coef

    @cached_property
    def beta0(self) -> np.ndarray:
        return beta0(self.problem, self.u0, self.numerics).coef

    @cached_property
    def jacobian0(self) -> np.ndarray:
        """``d b_j / d u_k`` along ``u0`` on the physical grid, (2, 2, N_x, P)."""
        return self.jacobian_at(self.u0.coef)

    def jacobian_at(self, coef: np.ndarray) -> np.ndarray:
        vals = to_phys(coef, self.numerics)
        return np.asarray(self.problem.db(self.x[:, None], vals), dtype=float)

    def chars(self, period: float, beta=None) -> Characteristics:
        if beta is None:
            key = float(period)
            if key not in self._chars:
                self._chars[key] = Characteristics(self.transport, period, self.beta0, self.numerics)
            return self._chars[key]
        return Characteristics(self.transport, period, beta, self.numerics)

    # nonlinear pieces -----------------------------------------------------
    def apply_B(self, beta: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``beta_j u_j - b_j(x, u)`` pointwise."""
        vals = to_phys(u, self.numerics)
        bvals = np.asarray(self.problem.b(self.x[:, None], vals), dtype=float)
        bet = to_phys(_fit_modes(beta, self.numerics.modes), self.numerics)
        return to_modes(bet * vals - bvals, self.numerics)

    def coupling(self, w: np.ndarray, jac: np.ndarray | None = None, beta=None) -> np.ndarray:
        """``d_u B(beta, u) w = beta w - b_u w`` with the Jacobian ``jac`` (default along u0)."""
        jac = self.jacobian0 if jac is None else jac
        beta = self.beta0 if beta is None else beta
        wv = to_phys(w, self.numerics)
        bet = to_phys(_fit_modes(beta, self.numerics.modes), self.numerics)
        prod = np.stack(
            [jac[j, 0] * wv[..., 0, :, :] + jac[j, 1] * wv[..., 1, :, :] for j in range(2)], axis=-3
        )
        return to_modes(bet * wv - prod, self.numerics)

    def source(self, eps: float, period: float, phi: float = 0.0) -> np.ndarray:
        """Distributed forcing ``eps f(t - phi)``."""
        return eps * _shift(self.forcing, -phi)

    def boundary_data(self, eps: float, period: float, phi: float = 0.0) -> np.ndarray:
        return eps * _shift(self.boundary, -phi)

    def boundary_nonlocal(self, u: np.ndarray) -> np.ndarray | None:
        return None

    # residuals ------------------------------------------------------------
    def residual_abstract(self, eps, period, u, beta=None, phi: float = 0.0) -> np.ndarray:
        """``u - C(R u + eps g) - D(B(beta, u) + eps f)``, forcing delayed by ``phi``."""
        ch = self.chars(period, beta)
        beta = self.beta0 if beta is None else beta
        w = ch.reflect(u) + self.boundary_data(eps, period, phi)
        return u - ch.apply_C(w) - ch.apply_D(self.apply_B(beta, u) + self.source(eps, period, phi))

    def residual_pde(self, eps, period, u, phi: float = 0.0):
        """PDE residual field and the two boundary-condition residuals."""
        vals = to_phys(u, self.numerics)
        bvals = np.asarray(self.problem.b(self.x[:, None], vals), dtype=float)
        field = transport_derivative(u, period, self.speed) + to_modes(bvals, self.numerics)
        field = field - self.source(eps, period, phi)
        r1, r2 = self.problem.reflection
        g = self.boundary_data(eps, period, phi)
        left = u[..., 0, 0, :] - r1 * u[..., 1, 0, :] - g[..., 0, :]
        right = u[..., 1, -1, :] - r2 * u[..., 0, -1, :] - g[..., 1, :]
        return field, np.stack([left, right], axis=-2)

    def apply_linearized(self, period, w, jac=None, beta=None) -> np.ndarray:
        """``(I - C R - D d_u B) w``."""
        ch = self.chars(period, beta)
        return w - ch.apply_C(ch.reflect(w)) - ch.apply_D(self.coupling(w, jac, beta))

    def linearization(self, period, state: np.ndarray, eps: float = 0.0, phi: float = 0.0) -> Callable:
        """``w -> d_u Res(eps, T, state) w``; the forcing does not enter."""
        jac = self.jacobian_at(state)
        return lambda w: self.apply_linearized(period, w, jac)

    def residual_phase_derivative(self, eps, period, u, phi: float = 0.0) -> np.ndarray:
        """``d/dphi`` of ``residual_abstract``; only the delayed forcing depends on phi."""
        ch = self.chars(period)
        k = np.arange(self.numerics.modes + 1)
        ddt = -2j * np.pi * k
        return -ch.apply_C(ddt * self.boundary_data(eps, period, phi)) - ch.apply_D(
            ddt * self.source(eps, period, phi)
        )

    def apply_A(self, period, u) -> np.ndarray:
        """``(1/T) u_t + a u_x + beta0 u`` per component."""
        bet = to_phys(self.beta0, self.numerics)
        return transport_derivative(u, period, self.speed) + to_modes(
            bet * to_phys(u, self.numerics), self.numerics
        )


def _shift(coef: np.ndarray, phi: float) -> np.ndarray:
    if phi == 0.0:
        return coef
    k = np.arange(coef.shape[-1])
    return coef * np.exp(2j * np.pi * k * phi)


# ---------------------------------------------------------------------------
# functional phi and direct (quadrature) evaluation of the kernels
# ---------------------------------------------------------------------------


def pairing(u: np.ndarray, v: np.ndarray, numerics: Numerics) -> float:
    """``sum_j int int u_j v_j dt dx`` for coefficient arrays."""
    w = node_weights(numerics.n_x, numerics.quad_order)
    per = u[..., 0].real * v[..., 0].real + 2.0 * (u[..., 1:] * np.conj(v[..., 1:])).real.sum(-1)
    return float((per * w).sum())


def boundary_pairing(u: np.ndarray, v: np.ndarray) -> float:
    """``int_0^1 u(t) v(t) dt`` for one-sided modes of two signals."""
    return float(u[0].real * v[0].real + 2.0 * (u[1:] * np.conj(v[1:])).real.sum())


def functional_phi_coef(form, u: np.ndarray, adjoint: np.ndarray, transport: Transport | None = None) -> float:
    """Bulk pairing of ``A u`` with the adjoint plus the boundary terms at each x_j^b."""
    transport = transport or form.transport
    bulk = pairing(form.apply_A(1.0, u), adjoint, form.numerics)
    sign = transport.boundary_sign()
    speed = form.speed
    nx = form.numerics.n_x
    edge = 0.0
    for j, b in enumerate(transport.bases):
        node = 0 if b == 0 else nx - 1
        edge += sign[j] * speed[j, node] * boundary_pairing(u[j, node], adjoint[j, node])
    return bulk - edge


class CharacteristicKernel:
    """Direct quadrature evaluation of ``alpha_j`` and ``c_j`` for a system."""

    def __init__(self, problem: SystemProblem, quad_points: int = 64):
        self.problem = problem
        self.transport = Transport.of_system(problem)
        self.quad_points = quad_points

    def alpha(self, j: int, x: float, y: float) -> float:
        return self.transport.alpha(j, x, y)

    def kernel_c(self, j: int, t: float, x: float, y: float, period: float, beta: PeriodicField) -> float:
        """``exp int_x^y beta_j(t + alpha_j(x, z)/T, z) / a_j(z) dz``."""
        if x == y:
            return 1.0
        speed = self.transport.speeds[j - 1]

        def integrand(z):
            times = t + np.array([self.alpha(j, x, zz) for zz in np.atleast_1d(z)]) / period
            vals = beta.eval(times, np.clip(z, 0.0, 1.0))[j - 1]
            return vals / np.asarray(speed(z), dtype=float)

        return float(np.exp(fixed_quad(integrand, x, y, n=self.quad_points)[0]))


# ---------------------------------------------------------------------------
# field-level entry points
# ---------------------------------------------------------------------------


def _form(problem: SystemProblem, like: PeriodicField, u0: PeriodicField | None = None) -> SystemForm:
    return SystemForm(problem, numerics_of(like), u0)


def alpha(problem: SystemProblem, j: int, x: float, y: float) -> float:
    return Transport.of_system(problem).alpha(j, x, y)


def kernel_c(problem: SystemProblem, j, t, x, y, period, beta: PeriodicField) -> float:
    return CharacteristicKernel(problem).kernel_c(j, t, x, y, period, beta)


def apply_R(problem: SystemProblem, u: PeriodicField) -> BoundarySignal:
    r1, r2 = problem.reflection
    return BoundarySignal(np.stack([r1 * u.coef[1, 0], r2 * u.coef[0, -1]]))


def apply_C(problem: SystemProblem, period: float, beta: PeriodicField, w: BoundarySignal,
            x_nodes=None, numerics: Numerics | None = None) -> PeriodicField:
    numerics = numerics or Numerics(modes=w.n_modes, n_x=beta.n_x)
    ch = Characteristics(Transport.of_system(problem), period, beta, numerics)
    return PeriodicField(ch.apply_C(_fit_modes(w.coef, numerics.modes)), numerics.x_nodes)


def apply_D(problem: SystemProblem, period: float, beta: PeriodicField, u: PeriodicField) -> PeriodicField:
    numerics = numerics_of(u)
    ch = Characteristics(Transport.of_system(problem), period, beta, numerics)
    return u.like(ch.apply_D(u.coef))


def apply_B(problem: SystemProblem, beta: PeriodicField, u: PeriodicField) -> PeriodicField:
    return u.like(_form(problem, u).apply_B(beta.coef, u.coef))


def residual_abstract(eps, period, beta: PeriodicField, u: PeriodicField, problem: SystemProblem) -> PeriodicField:
    form = _form(problem, u)
    return u.like(form.residual_abstract(eps, period, u.coef, beta=beta.coef))


def residual_pde(eps, period, u: PeriodicField, problem: SystemProblem):
    form = _form(problem, u)
    field, edge = form.residual_pde(eps, period, u.coef)
    return u.like(field), BoundarySignal(edge)


def apply_A(period, u: PeriodicField, form: SystemForm) -> PeriodicField:
    return u.like(form.apply_A(period, u.coef))


def functional_phi(u: PeriodicField, form: SystemForm, adjoint: PeriodicField) -> float:
    return functional_phi_coef(form, u.coef, adjoint.coef)
