"""Locked solutions near the orbit of the unforced solution.

With ``T = 1 + eps tau`` and ``u = S_phi (u0 + eps w)`` the forced problem
becomes ``F(eps, tau, phi, w) = 0`` where

    F = [Res(eps, T, u0 + eps w; forcing delayed by phi) - Res(0, 1, u0)] / eps

and ``w`` is constrained by ``<w, u*> = 0``.  At ``eps = 0`` the equation is
linear in ``w`` and solvable exactly when ``Phi(phi) = tau``; this gives the
seed.  For ``eps > 0`` Newton's method is run on ``(phi, w)``.  The bordered
matrix of the eps = 0 problem is factored once per context and serves as a
preconditioner for the exact Jacobian action at every Newton step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import LinearOperator, gmres

from ._grid import node_weights, pack, unpack
from .charops import SystemForm, functional_phi_coef
from .field import BoundarySignal, Numerics, PeriodicField
from .linsolve import dense_matrix, field_shape
from .phase import PhaseCurve, find_locked_phases

LOCK_NUMERICS = Numerics(modes=16, n_x=65)
STEP_TOL = 1e-10
SEED_PHASE_TOL = 1e-8
SOLUTION_TOL = 1e-7
_FD_STEP = 1e-3


class LockingError(RuntimeError):
    """Newton failure; ``last`` holds the final iterate ``(phi, w)``."""

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


def _five_point(fun, h: float = _FD_STEP):
    """Fourth-order central difference of ``fun`` at 0."""
    return (fun(-2 * h) - 8 * fun(-h) + 8 * fun(h) - fun(2 * h)) / (12 * h)


class LockContext:
    """Everything the seed and Newton solves share for one unforced solution.

    ``form`` supplies the discretized residual and its derivatives (a
    first-order system, or the first-order form of a second-order equation),
    ``adjoint`` the normalized adjoint solution and ``curve`` the phase
    function built from it.
    """

    def __init__(self, form, adjoint, curve: PhaseCurve):
        self.form = form
        self.adjoint = adjoint
        self.curve = curve
        self.numerics: Numerics = form.numerics
        self.shape = field_shape(form.n_components, self.numerics)
        self.u0 = form.u0.coef if isinstance(form.u0, PeriodicField) else form.u0
        self.ustar = adjoint.u_star.coef

    # fixed pieces ---------------------------------------------------------
    @cached_property
    def weights(self) -> np.ndarray:
        return node_weights(self.numerics.n_x, self.numerics.quad_order)

    @cached_property
    def constraint(self) -> np.ndarray:
        """Row vector of ``w -> <w, u*>`` on packed coefficients."""
        return (self.weights[None, :, None] * pack(self.ustar)).ravel()

    @cached_property
    def tangent(self) -> np.ndarray:
        return self.u0 * (2j * np.pi * np.arange(self.numerics.modes + 1))

    @cached_property
    def base_residual(self) -> np.ndarray:
        return self.form.residual_abstract(0.0, 1.0, self.u0)

    @cached_property
    def period_derivative(self) -> np.ndarray:
        """``d_T Res(0, T, u0)`` at ``T = 1``."""
        return _five_point(lambda h: self.form.residual_abstract(0.0, 1.0 + h, self.u0))

    def forcing_derivative(self, phi: float) -> np.ndarray:
        """``d_eps Res(eps, 1, u0; phi)`` at ``eps = 0``."""
        return _five_point(lambda h: self.form.residual_abstract(h, 1.0, self.u0, phi=phi))

    @cached_property
    def seed_column(self) -> np.ndarray:
        """``D(1, beta0) d_t u0``, the range direction complementary to ``L``."""
        return self.form.chars(1.0).apply_D(self.tangent)

    def functional(self, u: np.ndarray) -> float:
        return functional_phi_coef(self.form, u, self.ustar)

    @cached_property
    def linear_operator(self) -> np.ndarray:
        """Dense ``L = d_u Res(0, 1, u0)`` on packed coefficients."""
        return dense_matrix(self.form.linearization(1.0, self.u0), self.shape)

    @cached_property
    def bordered_lu(self):
        n = self.linear_operator.shape[0]
        mat = np.zeros((n + 1, n + 1))
        mat[:n, :n] = self.linear_operator
        mat[:n, n] = pack(self.seed_column).ravel()
        mat[n, :n] = self.constraint
        lu = sla.lu_factor(mat, check_finite=False)
        pivots = np.abs(np.diag(lu[0]))
        if not np.all(np.isfinite(pivots)) or pivots.min() <= 1e-13 * pivots.max():
            raise LockingError("seed solve failed (kersys/keradsys violated numerically)")
        return lu

    def bordered_solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.bordered_lu, rhs, check_finite=False)

    # packing --------------------------------------------------------------
    def to_vec(self, coef: np.ndarray) -> np.ndarray:
        return pack(coef).ravel()

    def to_coef(self, vec: np.ndarray) -> np.ndarray:
        return unpack(vec.reshape(self.shape[:-1] + (2 * self.shape[-1] - 1,)))

    def field(self, coef: np.ndarray) -> PeriodicField:
        return PeriodicField(coef, self.numerics.x_nodes)


def system_context(problem, u0: PeriodicField, numerics: Numerics | None = None, adjoint=None) -> LockContext:
    """Context for a forced first-order system."""
    from .adjoint import adjoint_from_form
    from .phase import phi_curve_sys

    numerics = numerics or LOCK_NUMERICS
    form = SystemForm(problem, numerics, u0)
    adjoint = adjoint or adjoint_from_form(form)
    curve = phi_curve_sys(problem, u0, adjoint)
    return LockContext(form, adjoint, curve)


# ---------------------------------------------------------------------------
# eps = 0: the seed
# ---------------------------------------------------------------------------


@dataclass
class Seed:
    phi: float
    tau: float
    w: PeriodicField
    slack: float
    residual: float

    def as_pair(self):
        return self.phi, self.w


def seed_solution(tau0: float, phi0: float, ctx: LockContext) -> Seed:
    """Solve ``F(0, tau0, phi0, w) = 0`` for ``w`` with ``<w, u*> = 0``.

    The bordered system ``[L, D d_t u0; <., u*>, 0]`` returns ``w`` and a
    slack ``s`` with ``L w = -(rhs + s D d_t u0)``; ``s = -phi(rhs)`` vanishes
    exactly when ``phi0`` solves the phase equation.
    """
    if abs(ctx.curve(phi0) - tau0) > SEED_PHASE_TOL:
        raise ValueError("seed phase does not solve the phase equation")
    rhs = tau0 * ctx.period_derivative + ctx.forcing_derivative(phi0)
    n = ctx.constraint.size
    sol = ctx.bordered_solve(np.append(-ctx.to_vec(rhs), 0.0))
    w = ctx.to_coef(sol[:n])
    slack = float(sol[n])
    lw = ctx.linear_operator @ sol[:n]
    defect = lw + ctx.to_vec(rhs) + slack * ctx.to_vec(ctx.seed_column)
    return Seed(float(phi0), float(tau0), ctx.field(w), slack, float(np.abs(defect).max()))


# ---------------------------------------------------------------------------
# eps > 0: Newton on (phi, w)
# ---------------------------------------------------------------------------


@dataclass
class LockedSolution:
    eps: float
    T: float
    tau: float
    phi: float
    w: PeriodicField
    u: PeriodicField
    residual_abstract: float
    residual_pde: float
    orbit_distance: float
    newton_iters: int
    constraint: float = 0.0
    history: list = field(default_factory=list)

    @property
    def orbit_ratio(self) -> float:
        return self.orbit_distance / self.eps


class _Newton:
    def __init__(self, eps: float, tau: float, ctx: LockContext, linear: str):
        self.eps = eps
        self.tau = tau
        self.period = 1.0 + eps * tau
        self.ctx = ctx
        self.linear = linear
        self.n = ctx.constraint.size

    def state(self, z):
        w = self.ctx.to_coef(z[: self.n])
        return w, float(z[self.n])

    def value(self, z) -> np.ndarray:
        ctx = self.ctx
        w, phi = self.state(z)
        res = ctx.form.residual_abstract(self.eps, self.period, ctx.u0 + self.eps * w, phi=phi)
        f = (res - ctx.base_residual) / self.eps
        return np.append(ctx.to_vec(f), ctx.constraint @ z[: self.n])

    def step(self, z, value) -> np.ndarray:
        ctx = self.ctx
        w, phi = self.state(z)
        u = ctx.u0 + self.eps * w
        lin = ctx.form.linearization(self.period, u, self.eps, phi)
        col = ctx.to_vec(ctx.form.residual_phase_derivative(self.eps, self.period, u, phi)) / self.eps
        n = self.n
        if self.linear == "dense":
            mat = np.zeros((n + 1, n + 1))
            mat[:n, :n] = dense_matrix(lin, ctx.shape)
            mat[:n, n] = col
            mat[n, :n] = ctx.constraint
            return np.linalg.solve(mat, -value)

        def matvec(v):
            out = np.empty(n + 1)
            out[:n] = ctx.to_vec(lin(ctx.to_coef(v[:n]))) + v[n] * col
            out[n] = ctx.constraint @ v[:n]
            return out

        op = LinearOperator((n + 1, n + 1), matvec=matvec, dtype=float)
        pre = LinearOperator((n + 1, n + 1), matvec=ctx.bordered_solve, dtype=float)
        sol, info = gmres(op, -value, M=pre, rtol=1e-11, atol=0.0, restart=60, maxiter=20)
        if info != 0:
            raise LockingError("Krylov solve of the Newton system did not converge")
        return sol


def solve_locked(eps: float, tau: float, seed, ctx: LockContext, tol: float = STEP_TOL,
                 max_iter: int = 30, linear: str = "krylov") -> LockedSolution:
    """Newton iteration for ``F(eps, tau, phi, w) = 0`` from ``seed = (phi0, w0)``.

    Stops when the sup-norm of the step in ``(phi, w)`` drops below ``tol``.
    If the step grows three times in a row the iteration restarts once with
    step halving (at most 20 halvings per step).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    phi0, w0 = seed.as_pair() if isinstance(seed, Seed) else seed
    w0 = w0.coef if isinstance(w0, PeriodicField) else w0
    newton = _Newton(float(eps), float(tau), ctx, linear)
    start = np.append(ctx.to_vec(w0), float(phi0))
    try:
        z, iters, history = _iterate(newton, start, tol, max_iter, damped=False)
    except LockingError:
        z, iters, history = _iterate(newton, start, tol, max_iter, damped=True)
    return _assemble(newton, z, iters, history)


def _iterate(newton: _Newton, z, tol, max_iter, damped: bool):
    history = []
    growth = 0
    value = newton.value(z)
    for it in range(1, max_iter + 1):
        step = newton.step(z, value)
        lam = 1.0
        if damped:
            base = np.abs(value).max()
            for _ in range(20):
                trial = newton.value(z + lam * step)
                if np.abs(trial).max() < base:
                    break
                lam *= 0.5
        z = z + lam * step
        value = newton.value(z)
        size = float(np.abs(lam * step).max())
        history.append(size)
        if size < tol:
            return z, it, history
        if len(history) > 1 and size > history[-2]:
            growth += 1
            if growth >= 3 and not damped:
                raise LockingError("Newton iteration diverges", last=newton.state(z))
        else:
            growth = 0
    raise LockingError("Newton iteration did not converge", last=newton.state(z))


def _assemble(newton: _Newton, z, iters, history) -> LockedSolution:
    ctx = newton.ctx
    w, phi = newton.state(z)
    eps, period = newton.eps, newton.period
    u_frame = ctx.u0 + eps * w
    res = ctx.form.residual_abstract(eps, period, u_frame, phi=phi)
    u = ctx.field(u_frame).shift(phi)
    bulk, edge = ctx.form.residual_pde(eps, period, u.coef)
    res_pde = max(ctx.field(bulk).sup_norm(), BoundarySignal(edge).sup_norm())
    _, dist = orbit_distance(u, ctx.field(ctx.u0))
    return LockedSolution(
        eps, period, newton.tau, phi % 1.0, ctx.field(w), u,
        ctx.field(res).sup_norm(), res_pde, dist, iters,
        float(ctx.constraint @ z[: newton.n]), history,
    )


# ---------------------------------------------------------------------------
# orbit distance and the sequence diagnostic
# ---------------------------------------------------------------------------


def _orbit_gap(u_vals, u0: PeriodicField, n_t: int, phi: float) -> float:
    return float(np.abs(u_vals - u0.shift(phi).values(n_t)).max())


def _orbit_gap_l2(u_vals, u0: PeriodicField, n_t: int, phi: float) -> float:
    return float(np.sum((u_vals - u0.shift(phi).values(n_t)) ** 2))


def orbit_distance(u: PeriodicField, u0: PeriodicField, scan: int = 256):
    """``(phi*, min_phi ||u - S_phi u0||_inf)`` with ties resolved to the smallest phi in [0, 1)."""
    m = max(u.n_modes, u0.n_modes)
    n_t = max(8 * m, 64)
    u0 = u0.truncate(u0.n_modes)
    u_vals = u.values(n_t)
    grid = np.arange(scan) / scan
    coarse = np.array([_orbit_gap(u_vals, u0, n_t, p) for p in grid])
    scale = max(1.0, float(np.abs(u_vals).max()))
    # refine every coarse local minimum that can compete with the best one
    local = [i for i in range(scan) if coarse[i] <= coarse[i - 1] and coarse[i] <= coarse[(i + 1) % scan]]
    best = coarse.min()
    spread = coarse.max() - best
    candidates = [i for i in local if coarse[i] <= best + 0.05 * spread + 1e-12 * scale]
    found = []
    for i in candidates:
        lo, hi = grid[i] - 1.0 / scan, grid[i] + 1.0 / scan
        res = minimize_scalar(lambda p: _orbit_gap(u_vals, u0, n_t, p), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        # the sup gap has a kink at its minimum; the smooth L2 gap pins it down better
        # search in the offset from the grid point so Brent's relative tolerance stays tiny
        smooth = minimize_scalar(lambda s: _orbit_gap_l2(u_vals, u0, n_t, grid[i] + s),
                                 bounds=(-1.0 / scan, 1.0 / scan), method="bounded", options={"xatol": 1e-14})
        p_smooth = grid[i] + smooth.x
        found.append(min((float(res.fun), float(res.x % 1.0)),
                         (_orbit_gap(u_vals, u0, n_t, p_smooth), float(p_smooth % 1.0))))
    d_best = min(f for f, _ in found)
    tie = 1e-9 * scale
    phi = min(p for f, p in found if f <= d_best + tie)
    if phi > 1.0 - 1e-12:
        phi = 0.0
    return phi, d_best


@dataclass
class DiagnosticEntry:
    eps: float
    period: float
    phi: float
    value: float
    residual: float
    accepted: bool


def sys2_diagnostic(sequence, ctx: LockContext, tol: float = SOLUTION_TOL) -> list[DiagnosticEntry]:
    """``Phi(phi_k) - (T_k - 1) / eps_k`` along a sequence of solutions.

    ``sequence`` holds ``(eps_k, T_k, u_k)``; ``phi_k`` is the nearest point on
    the orbit of ``u0``.  Members whose residual exceeds ``tol`` are flagged
    (``accepted = False``) and carry ``value = nan``.
    """
    out = []
    u0 = ctx.field(ctx.u0)
    for eps, period, u in sequence:
        coef = u.coef if isinstance(u, PeriodicField) else u
        res = ctx.field(ctx.form.residual_abstract(eps, period, coef)).sup_norm()
        phi, _ = orbit_distance(ctx.field(coef), u0)
        if res > tol:
            out.append(DiagnosticEntry(eps, period, phi, math.nan, res, False))
            continue
        value = float(ctx.curve(phi)) - (period - 1.0) / eps
        out.append(DiagnosticEntry(eps, period, phi, value, res, True))
    return out


# ---------------------------------------------------------------------------
# sweeps over the wedge K(eps0, tau0)
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    eps: float
    tau: float
    solution: LockedSolution | None = None
    failure: str | None = None


@dataclass
class SweepResult:
    phi0: float
    tau0: float
    points: list = field(default_factory=list)
    asymptotic_phases: dict = field(default_factory=dict)

    @property
    def successes(self) -> list:
        return [p.solution for p in self.points if p.solution is not None]

    @property
    def uniform_bound(self) -> float:
        """``sup (1/eps) inf_phi ||u - S_phi u0||`` over the converged points."""
        vals = [s.orbit_ratio for s in self.successes]
        return max(vals) if vals else math.nan

    @property
    def scaling_bound(self) -> float:
        """``sup (|T - 1| + eps ||w||_inf) / eps`` over the converged points."""
        vals = [(abs(s.T - 1.0) + s.eps * s.w.sup_norm()) / s.eps for s in self.successes]
        return max(vals) if vals else math.nan

    def rows(self) -> list[tuple]:
        out = []
        for p in self.points:
            s = p.solution
            if s is None:
                out.append((p.eps, p.tau, 1 + p.eps * p.tau, math.nan, math.nan, math.nan, math.nan))
            else:
                out.append((s.eps, s.tau, s.T, s.phi, s.w.sup_norm(),
                            max(s.residual_abstract, s.residual_pde), s.orbit_ratio))
        return out


def nearest_root(curve: PhaseCurve, tau: float, phi_ref: float):
    roots = [r for r in find_locked_phases(curve, tau) if r.nondegenerate]
    if not roots:
        return None
    return min(roots, key=lambda r: abs(((r.phi - phi_ref + 0.5) % 1.0) - 0.5))


def sweep(eps0: float, tau0: float, ctx: LockContext, n_eps: int = 3, n_tau: int = 3,
          tau_width: float | None = None, phi0: float | None = None, linear: str = "krylov") -> SweepResult:
    """Solutions on ``eps = eps0 / 2^k`` (k < n_eps) and ``n_tau`` values of tau around ``tau0``.

    Points are visited by increasing eps, tau inner loop; each starts from the
    previous solution at the same tau (or from the seed at the smallest eps).
    """
    if phi0 is None:
        root = nearest_root(ctx.curve, tau0, 0.0)
        if root is None:
            raise LockingError("no nondegenerate root of the phase equation at tau0")
        phi0 = root.phi
    result = SweepResult(float(phi0), float(tau0))
    if not eps0 > 0 or n_eps <= 0 or n_tau <= 0:
        return result
    if tau_width is None:
        lo, hi = _locking_window(ctx.curve, tau0, phi0)
        tau_width = 0.5 * min(tau0 - lo, hi - tau0)
    taus = [tau0] if n_tau == 1 else list(np.linspace(tau0 - tau_width, tau0 + tau_width, n_tau))
    epss = sorted(eps0 / 2.0**k for k in range(n_eps))
    warm: dict = {}
    for tau in taus:
        root = nearest_root(ctx.curve, tau, phi0)
        if root is None:
            continue
        result.asymptotic_phases[float(tau)] = root.phi
        seed = seed_solution(tau, root.phi, ctx)
        warm[float(tau)] = (seed.phi, seed.w.coef)
    for eps in epss:
        for tau in taus:
            key = float(tau)
            if key not in warm:
                result.points.append(SweepPoint(eps, tau, None, "no nondegenerate root near phi0"))
                continue
            try:
                sol = solve_locked(eps, tau, warm[key], ctx, linear=linear)
            except (LockingError, ValueError) as exc:
                result.points.append(SweepPoint(eps, tau, None, str(exc)))
                continue
            warm[key] = (sol.phi, sol.w.coef)
            result.points.append(SweepPoint(eps, tau, sol))
    return result


def _locking_window(curve: PhaseCurve, tau0: float, phi0: float):
    """Values of Phi reachable from phi0 without crossing a zero of Phi'."""
    grid = np.linspace(0.0, 1.0, 4097)
    s0 = np.sign(curve.slope(phi0))
    vals = []
    for direction in (1.0, -1.0):
        p = phi0
        for d in grid[1:]:
            q = phi0 + direction * d
            if np.sign(curve.slope(q)) != s0:
                break
            p = q
        vals.append(float(curve(p)))
    return min(vals), max(vals)
