"""Problem definitions and reference instances.

Two problem classes are provided: the 2x2 first-order hyperbolic system with
reflection boundary conditions, and the damped/nonlinear wave equation with a
Dirichlet condition at x = 0 and a Robin condition at x = 1.  Both carry the
symbolic expressions they were built from, so they can be written back to the
JSON problem format.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from . import expr as ex
from .field import BoundarySignal, Numerics, PeriodicField

_FD_STEP = 1e-6
_FD_TOL = 1e-5


def _check_derivative(fn, dfn, points, what: str, axis_offset: int):
    """Compare an analytic derivative with central differences."""
    x, args = points
    base = dfn(x, *args)
    for k in range(len(args)):
        plus = list(args)
        minus = list(args)
        plus[k] = args[k] + _FD_STEP
        minus[k] = args[k] - _FD_STEP
        fd = (fn(x, *plus) - fn(x, *minus)) / (2 * _FD_STEP)
        exact = np.take(base, k, axis=axis_offset)
        scale = 1.0 + np.abs(exact).max()
        if np.abs(fd - exact).max() > _FD_TOL * scale:
            raise ValueError(f"supplied derivative {what} disagrees with finite differences")


# ---------------------------------------------------------------------------
# first-order systems
# ---------------------------------------------------------------------------


class SystemProblem:
    """(1/T) u_t + a(x) u_x + b(x, u) = eps f, with reflection boundary conditions.

    Boundary conditions: ``u1(t,0) = r1 u2(t,0) + eps g1(t)`` and
    ``u2(t,1) = r2 u1(t,1) + eps g2(t)``.

    Parameters
    ----------
    speeds, dspeeds : pair of callables ``x -> array``
        Characteristic speeds ``a_j`` and their x-derivatives.
    nonlinearity : callable ``(x, u) -> (2, ...)``
        The zero-order term ``b``; ``u`` has a leading axis of length 2.
    jacobian, hessian : callables
        ``d b_j / d u_k`` with shape ``(2, 2, ...)`` and the second
        derivatives with shape ``(2, 2, 2, ...)``.
    reflection : (r1, r2)
    forcing : callable ``(t, x) -> (2, ...)`` or None
    boundary_forcing : callable ``t -> (2, ...)`` or None
    """

    kind = "system"

    def __init__(
        self,
        speeds: Sequence[Callable],
        dspeeds: Sequence[Callable],
        nonlinearity: Callable,
        jacobian: Callable,
        hessian: Callable,
        reflection: Sequence[float],
        forcing: Callable | None = None,
        boundary_forcing: Callable | None = None,
        expressions: dict | None = None,
        name: str = "system",
        validate: bool = True,
    ):
        self.speeds = tuple(speeds)
        self.dspeeds = tuple(dspeeds)
        self.b = nonlinearity
        self.db = jacobian
        self.d2b = hessian
        self.reflection = np.array(reflection, dtype=float)
        self.forcing = forcing
        self.boundary_forcing = boundary_forcing
        self.expressions = expressions
        self.name = name
        if validate:
            self._validate()

    def _validate(self):
        xs = np.linspace(0.0, 1.0, 257)
        a1 = np.asarray(self.speeds[0](xs), dtype=float)
        a2 = np.asarray(self.speeds[1](xs), dtype=float)
        if np.any(a1 == 0) or np.any(a2 == 0) or np.any(np.sign(a1) != np.sign(a1[0])) or np.any(
            np.sign(a2) != np.sign(a2[0])
        ):
            raise ValueError("characteristic speeds must not vanish on [0, 1]")
        if np.any(np.isclose(a1, a2, rtol=0, atol=1e-12)):
            raise ValueError("characteristic speeds must differ on [0, 1]")
        rng = np.random.default_rng(12345)
        x = rng.uniform(0.05, 0.95, 7)
        u = rng.uniform(-1.0, 1.0, (2, 7))
        b = lambda x, u1, u2: self.b(x, np.stack([u1, u2]))
        db = lambda x, u1, u2: self.db(x, np.stack([u1, u2]))
        d2b = lambda x, u1, u2: self.d2b(x, np.stack([u1, u2]))
        _check_derivative(b, db, (x, list(u)), "jacobian", 1)
        _check_derivative(db, d2b, (x, list(u)), "hessian", 2)
        for j in range(2):
            fd = (self.speeds[j](x + _FD_STEP) - self.speeds[j](x - _FD_STEP)) / (2 * _FD_STEP)
            if np.abs(fd - self.dspeeds[j](x)).max() > _FD_TOL * (1 + np.abs(fd).max()):
                raise ValueError("supplied speed derivative disagrees with finite differences")

    # discretized data -------------------------------------------------
    def forcing_field(self, numerics: Numerics) -> PeriodicField:
        if self.forcing is None:
            return PeriodicField.zeros(2, numerics.modes, numerics.x_nodes)
        return PeriodicField.from_function(self.forcing, numerics.modes, numerics.x_nodes, 2)

    def boundary_field(self, numerics: Numerics) -> BoundarySignal:
        if self.boundary_forcing is None:
            return BoundarySignal.zeros(numerics.modes)
        return BoundarySignal.from_function(self.boundary_forcing, numerics.modes)

    @property
    def is_forced(self) -> bool:
        return self.forcing is not None or self.boundary_forcing is not None

    def with_forcing(self, forcing=None, boundary_forcing=None, expressions: dict | None = None):
        exprs = dict(self.expressions or {})
        exprs.pop("forcing", None)
        exprs.pop("boundary_forcing", None)
        if expressions:
            exprs.update(expressions)
        return SystemProblem(
            self.speeds, self.dspeeds, self.b, self.db, self.d2b, self.reflection,
            forcing, boundary_forcing, exprs, self.name, validate=False,
        )

    # serialization ----------------------------------------------------
    @classmethod
    def from_expressions(cls, doc: dict, name: str | None = None) -> "SystemProblem":
        speeds = [ex.parse(s, ("x",)) for s in doc["speeds"]]
        bexpr = [ex.parse(s, ("x", "u1", "u2")) for s in doc["nonlinearity"]]
        u1, u2, x = ex.SYMBOLS["u1"], ex.SYMBOLS["u2"], ex.SYMBOLS["x"]
        us = (u1, u2)
        jac = [[sp.diff(bj, uk) for uk in us] for bj in bexpr]
        hess = [[[sp.diff(bj, uk, ul) for ul in us] for uk in us] for bj in bexpr]
        args = ("x", "u1", "u2")
        bfn = ex.compile_array(bexpr, args)
        jfn = ex.compile_array(jac, args)
        hfn = ex.compile_array(hess, args)
        forcing = boundary = None
        if doc.get("forcing") is not None:
            forcing = ex.compile_array([ex.parse(s, ("t", "x")) for s in doc["forcing"]], ("t", "x"))
        if doc.get("boundary_forcing") is not None:
            boundary = ex.compile_array(
                [ex.parse(s, ("t",)) for s in doc["boundary_forcing"]], ("t",)
            )
        texts = {
            "kind": "system",
            "speeds": [ex.to_text(s) for s in speeds],
            "nonlinearity": [ex.to_text(e) for e in bexpr],
            "reflection": [float(r) for r in doc["reflection"]],
        }
        for key in ("forcing", "boundary_forcing"):
            if doc.get(key) is not None:
                texts[key] = [str(s) for s in doc[key]]
        return cls(
            [ex.compile_expr(s, ("x",)) for s in speeds],
            [ex.compile_expr(sp.diff(s, x), ("x",)) for s in speeds],
            lambda xx, u: bfn(xx, u[0], u[1]),
            lambda xx, u: jfn(xx, u[0], u[1]),
            lambda xx, u: hfn(xx, u[0], u[1]),
            doc["reflection"],
            forcing,
            boundary,
            texts,
            name or doc.get("name", "system"),
        )


@dataclass
class UnforcedSolution:
    """Known 1-periodic solution of the unforced problem at period 1."""

    fn: Callable
    n_components: int
    expressions: list | None = None
    dx_fn: Callable | None = None
    dt_fn: Callable | None = None
    period: float = 1.0
    meta: dict = field(default_factory=dict)

    def field(self, numerics: Numerics) -> PeriodicField:
        return PeriodicField.from_function(self.fn, numerics.modes, numerics.x_nodes, self.n_components)

    @classmethod
    def from_expressions(cls, texts, n_components: int):
        t, x = ex.SYMBOLS["t"], ex.SYMBOLS["x"]
        exprs = [ex.parse(s, ("t", "x")) for s in texts]
        fn = ex.compile_array(exprs, ("t", "x"))
        dx = ex.compile_array([sp.diff(e, x) for e in exprs], ("t", "x"))
        dt = ex.compile_array([sp.diff(e, t) for e in exprs], ("t", "x"))
        return cls(fn, n_components, [ex.to_text(e) for e in exprs], dx, dt)


def _pointwise(problem, u_vals, x_nodes, which):
    x = np.asarray(x_nodes)[:, None]
    return which(x, u_vals)


def coeff_bjk(problem: SystemProblem, u0: PeriodicField, j: int, k: int,
              numerics: Numerics | None = None) -> PeriodicField:
    """``b_jk(t, x) = d b_j / d u_k (x, u0(t, x))`` for ``j, k`` in {1, 2}."""
    if j not in (1, 2) or k not in (1, 2):
        raise ValueError("component indices are 1 or 2")
    n = numerics.n_phys if numerics else 4 * u0.n_modes
    jac = _pointwise(problem, u0.values(n), u0.x_nodes, problem.db)
    return PeriodicField.from_values(jac[j - 1, k - 1][None], u0.x_nodes, u0.n_modes)


def beta0(problem: SystemProblem, u0: PeriodicField, numerics: Numerics | None = None) -> PeriodicField:
    """Diagonal coefficients ``(b_11, b_22)`` along the unforced solution."""
    n = numerics.n_phys if numerics else 4 * u0.n_modes
    jac = _pointwise(problem, u0.values(n), u0.x_nodes, problem.db)
    return PeriodicField.from_values(np.stack([jac[0, 0], jac[1, 1]]), u0.x_nodes, u0.n_modes)


# ---------------------------------------------------------------------------
# second-order problems
# ---------------------------------------------------------------------------


class SecondOrderProblem:
    """(1/T^2) u_tt - a^2 u_xx + b(x, u, u_t/T, u_x) = eps f.

    Boundary conditions ``u(t,0) = eps g1(t)`` and
    ``u_x(t,1) + gamma u(t,1) = eps g2(t)``.  ``gradient`` returns the partial
    derivatives of ``b`` with respect to its last three slots, shape
    ``(3, ...)``; ``hessian`` has shape ``(3, 3, ...)``.
    """

    kind = "second_order"

    def __init__(
        self,
        speed: Callable,
        dspeed: Callable,
        nonlinearity: Callable,
        gradient: Callable,
        hessian: Callable,
        gamma: float,
        forcing: Callable | None = None,
        boundary_forcing: Callable | None = None,
        expressions: dict | None = None,
        name: str = "second_order",
        validate: bool = True,
    ):
        self.a = speed
        self.da = dspeed
        self.b = nonlinearity
        self.grad = gradient
        self.hess = hessian
        self.gamma = float(gamma)
        self.forcing = forcing
        self.boundary_forcing = boundary_forcing
        self.expressions = expressions
        self.name = name
        if validate:
            self._validate()

    def _validate(self):
        xs = np.linspace(0.0, 1.0, 257)
        a = np.asarray(self.a(xs), dtype=float)
        if np.any(a <= 0):
            raise ValueError("the wave speed must be positive on [0, 1]")
        rng = np.random.default_rng(54321)
        x = rng.uniform(0.05, 0.95, 7)
        args = list(rng.uniform(-1.0, 1.0, (3, 7)))
        _check_derivative(self.b, self.grad, (x, args), "gradient", 0)
        _check_derivative(self.grad, self.hess, (x, args), "hessian", 1)

    def forcing_field(self, numerics: Numerics) -> PeriodicField:
        if self.forcing is None:
            return PeriodicField.zeros(1, numerics.modes, numerics.x_nodes)
        return PeriodicField.from_function(self.forcing, numerics.modes, numerics.x_nodes, 1)

    def boundary_field(self, numerics: Numerics) -> BoundarySignal:
        if self.boundary_forcing is None:
            return BoundarySignal.zeros(numerics.modes)
        return BoundarySignal.from_function(self.boundary_forcing, numerics.modes)

    @property
    def is_forced(self) -> bool:
        return self.forcing is not None or self.boundary_forcing is not None

    def with_forcing(self, forcing=None, boundary_forcing=None, expressions: dict | None = None):
        exprs = dict(self.expressions or {})
        exprs.pop("forcing", None)
        exprs.pop("boundary_forcing", None)
        if expressions:
            exprs.update(expressions)
        return SecondOrderProblem(
            self.a, self.da, self.b, self.grad, self.hess, self.gamma,
            forcing, boundary_forcing, exprs, self.name, validate=False,
        )

    @classmethod
    def from_expressions(cls, doc: dict, name: str | None = None) -> "SecondOrderProblem":
        x = ex.SYMBOLS["x"]
        a = ex.parse(doc["speed"], ("x",))
        bexpr = ex.parse(doc["nonlinearity"], ("x", "u", "p", "q"))
        slots = tuple(ex.SYMBOLS[s] for s in ("u", "p", "q"))
        grad = [sp.diff(bexpr, s) for s in slots]
        hess = [[sp.diff(bexpr, s, r) for r in slots] for s in slots]
        args = ("x", "u", "p", "q")
        forcing = boundary = None
        if doc.get("forcing") is not None:
            fe = ex.parse(doc["forcing"], ("t", "x"))
            ff = ex.compile_expr(fe, ("t", "x"))
            forcing = lambda t, xx: ff(t, xx)[None]
        if doc.get("boundary_forcing") is not None:
            boundary = ex.compile_array(
                [ex.parse(s, ("t",)) for s in doc["boundary_forcing"]], ("t",)
            )
        texts = {
            "kind": "second_order",
            "speed": ex.to_text(a),
            "nonlinearity": ex.to_text(bexpr),
            "gamma": float(doc.get("gamma", 0.0)),
        }
        for key in ("forcing", "boundary_forcing"):
            if doc.get(key) is not None:
                texts[key] = doc[key]
        return cls(
            ex.compile_expr(a, ("x",)),
            ex.compile_expr(sp.diff(a, x), ("x",)),
            ex.compile_expr(bexpr, args),
            ex.compile_array(grad, args),
            ex.compile_array(hess, args),
            float(doc.get("gamma", 0.0)),
            forcing,
            boundary,
            texts,
            name or doc.get("name", "second_order"),
        )


# ---------------------------------------------------------------------------
# reference instances
# ---------------------------------------------------------------------------

_T, _X = ex.SYMBOLS["t"], ex.SYMBOLS["x"]


def _hermite(p0, d0, p1, d1):
    x = _X
    h00 = 2 * x**3 - 3 * x**2 + 1
    h10 = x**3 - 2 * x**2 + x
    h01 = -2 * x**3 + 3 * x**2
    h11 = x**3 - x**2
    return p0 * h00 + d0 * h10 + p1 * h01 + d1 * h11


def _rat(v):
    return sp.nsimplify(v, rational=True) if not isinstance(v, sp.Basic) else v


def manufacture_system(
    speeds=(2, -2),
    reflection=(sp.Rational(-1, 2), sp.Rational(4, 5)),
    amplitude0=1,
    amplitude1=sp.Rational(6, 7),
    phase1=sp.Rational(2, 3),
    slope0=(sp.Rational(1, 4), sp.Rational(1, 5)),
    slope1=(sp.Rational(19, 20), sp.Rational(-31, 20)),
    radial_damping=1,
    forcing=None,
    boundary_forcing=None,
):
    """Ellipse-shaped periodic solution of a coupled system, built symbolically.

    The unforced solution is ``u0(t, x) = E(x) (cos 2 pi t, sin 2 pi t)`` with a
    cubic matrix polynomial ``E``.  The orbit at each boundary point is
    necessarily a segment (the boundary condition makes the two components
    proportional), so ``E`` is rank one at x = 0 and x = 1 and its slopes there
    are chosen such that the coupling matrix

        M(x) = -(2 pi E J + diag(a) E') E^{-1}

    stays smooth.  The nonlinearity is ``b(x, u) = M(x) u + k q(x, u) u`` with
    ``q = |adj(E) u|^2 - det(E)^2``, which vanishes on the orbit; the radial
    term removes the radial direction from the kernel of the linearization.

    Returns ``(SystemProblem, UnforcedSolution)``.
    """
    a1, a2 = (_rat(s) for s in speeds)
    r1, r2 = (_rat(r) for r in reflection)
    rho0, rho1, th = _rat(amplitude0), _rat(amplitude1), _rat(phase1)
    if r1 * r2 >= 0:
        raise ValueError("the construction needs reflection coefficients of opposite signs")
    if rho0 == 0 or rho1 == 0:
        raise ValueError("degenerate ellipse: zero amplitude at a boundary")
    pi = sp.pi
    A = sp.diag(a1, a2)
    Ai = A.inv()
    p = sp.Matrix([r1, 1])
    q = sp.Matrix([1, r2])
    w = sp.Matrix([[rho0, 0]])
    v = sp.Matrix([[rho1 * sp.cos(2 * pi * th), rho1 * sp.sin(2 * pi * th)]])
    E0 = p * w
    E1 = q * v
    col2 = 2 * pi * rho0 * Ai * p
    D0 = sp.Matrix.hstack(sp.Matrix([_rat(s) for s in slope0]), col2)
    vperp = sp.Matrix([v[1], -v[0]])
    rhs1 = -2 * pi * (v * v.T)[0] * Ai * q
    Vm = sp.Matrix.hstack(v.T, vperp)
    D1 = sp.simplify(sp.Matrix.hstack(sp.Matrix([_rat(s) for s in slope1]), rhs1) * Vm.inv())
    E = (E0 * _hermite(1, 0, 0, 0) + D0 * _hermite(0, 1, 0, 0)
         + E1 * _hermite(0, 0, 1, 0) + D1 * _hermite(0, 0, 0, 1)).applyfunc(sp.expand)
    det = sp.expand(E.det())
    reduced = sp.cancel(det / (_X * (1 - _X)))
    xs = np.linspace(0, 1, 401)
    dvals = sp.lambdify(_X, reduced, "numpy")(xs) * np.ones_like(xs)
    if np.any(dvals * np.sign(dvals[0]) <= 0):
        raise ValueError("E(x) is singular inside (0, 1); choose other slopes")
    J = sp.Matrix([[0, -1], [1, 0]])
    N = 2 * pi * E * J + A * E.diff(_X)
    Mnum = -(N * E.adjugate()).applyfunc(sp.expand)
    Mx = Mnum.applyfunc(lambda z: sp.cancel(z / det))
    for z in Mx:
        den = sp.denom(sp.together(z))
        if sp.simplify(den.subs(_X, 0)) == 0 or sp.simplify(den.subs(_X, 1)) == 0:
            raise ValueError("boundary slopes do not make the coupling regular")
    u1, u2 = ex.SYMBOLS["u1"], ex.SYMBOLS["u2"]
    U = sp.Matrix([u1, u2])
    adjU = E.adjugate() * U
    qform = sp.expand((adjU.T * adjU)[0] - det**2)
    k = _rat(radial_damping)
    bvec = Mx * U + k * qform * U
    e = sp.Matrix([sp.cos(2 * pi * _T), sp.sin(2 * pi * _T)])
    u0 = E * e
    doc = {
        "kind": "system",
        "name": "ellipse",
        "speeds": [sp.sstr(a1), sp.sstr(a2)],
        "nonlinearity": [sp.sstr(bvec[0]), sp.sstr(bvec[1])],
        "reflection": [float(r1), float(r2)],
        "unforced": [sp.sstr(u0[0]), sp.sstr(u0[1])],
    }
    if forcing is not None:
        doc["forcing"] = list(forcing)
    if boundary_forcing is not None:
        doc["boundary_forcing"] = list(boundary_forcing)
    problem, sol = load_problem(doc)
    sol.meta.update({"E": E, "coupling": Mx, "det": det})
    _check_boundary(problem, sol)
    return problem, sol


def _check_boundary(problem: SystemProblem, sol: UnforcedSolution, tol: float = 1e-12):
    t = np.linspace(0, 1, 64, endpoint=False)
    r1, r2 = problem.reflection
    left = sol.fn(t, np.zeros_like(t))
    right = sol.fn(t, np.ones_like(t))
    err = max(np.abs(left[0] - r1 * left[1]).max(), np.abs(right[1] - r2 * right[0]).max())
    if err > tol:
        raise ValueError(f"orbit is not phase-compatible with the boundary conditions ({err:.2e})")


def counterexample_sys(profile: str = "cos(2*pi*s) + sin(4*pi*s)/2"):
    """Transport pair with b = 0 and unit reflections: every profile is a solution.

    ``u0 = (Psi(t - x), Psi(t + x))`` for any 1-periodic ``Psi``; the unforced
    problem has a continuum of periodic solutions, so the non-resonance
    conditions must fail (both margins vanish).
    """
    s = sp.Symbol("s", real=True)
    psi = sp.sympify(profile, locals={"s": s, "pi": sp.pi})
    doc = {
        "kind": "system",
        "name": "transport_counterexample",
        "speeds": ["1", "-1"],
        "nonlinearity": ["0", "0"],
        "reflection": [1.0, 1.0],
        "unforced": [sp.sstr(psi.subs(s, _T - _X)), sp.sstr(psi.subs(s, _T + _X))],
    }
    return load_problem(doc)


def manufacture_second_order(
    speed=2,
    shape=(sp.Rational(1, 2), sp.Rational(-1, 2) + sp.I * sp.Rational(3, 5), None),
    radial_damping=1,
    forcing=None,
    boundary_forcing=None,
):
    """Damped wave equation with a known time-harmonic periodic solution.

    ``u0 = Re(Z(x) exp(2 pi i t))`` with ``Z = x (1 + z1 x + z2 x^2 + z3 x^3)``,
    ``z1`` real, so that ``Z''(0)`` is a real multiple of ``Z'(0)`` (required
    because u and u_t vanish at x = 0).  The remaining coefficient ``z3`` is
    fixed so that ``Z'(1) / Z(1)`` is real; the Robin coefficient is then
    ``gamma = -Z'(1) / Z(1)``.  With ``b = m1 u + lam p + m3 q + k (u^2 +
    p^2 / 4 pi^2 - |Z|^2) p`` and ``m3 = 2 a^2 z1``, the remaining coefficients
    are ``m1 + 2 pi i lam = (4 pi^2 Z + a^2 Z'' - m3 Z') / Z``.
    """
    a = _rat(speed)
    z1 = _rat(shape[0])
    z2 = sp.nsimplify(shape[1])
    pi = sp.pi
    if shape[2] is None:
        # choose z3 = s real-multiple direction solving Im(Z'(1) conj Z(1)) = 0
        s = sp.Symbol("s", real=True)
        z3 = s * sp.I
        Z1 = 1 + z1 + z2 + z3
        dZ1 = 1 + 2 * z1 + 3 * z2 + 4 * z3
        cond = sp.im(sp.expand(dZ1 * sp.conjugate(Z1)))
        sols = [r for r in sp.solve(sp.expand(cond), s) if r.is_real]
        if not sols:
            raise ValueError("no admissible shape coefficient")
        z3 = sp.nsimplify(min(sols, key=lambda r: abs(float(r)))) * sp.I
    else:
        z3 = sp.nsimplify(shape[2])
    Z = sp.expand(_X * (1 + z1 * _X + z2 * _X**2 + z3 * _X**3))
    Zr, Zi = sp.re(Z), sp.im(Z)
    dZ = sp.diff(Z, _X)
    ratio = sp.simplify(dZ.subs(_X, 1) / Z.subs(_X, 1))
    if abs(complex(ratio).imag) > 1e-12:
        raise ValueError("Z'(1)/Z(1) must be real")
    gamma = -sp.re(ratio)
    m3 = 2 * a**2 * z1
    quotient = sp.cancel(sp.expand((4 * pi**2 * Z + a**2 * sp.diff(Z, _X, 2) - m3 * dZ) / _X) / sp.expand(Z / _X))
    qr, qi = sp.fraction(sp.together(quotient))
    # split real / imaginary parts over a real denominator
    num = sp.expand(qr * sp.conjugate(qi))
    den = sp.expand(qi * sp.conjugate(qi))
    m1 = sp.cancel(sp.re(num) / den)
    lam = sp.cancel(sp.im(num) / den / (2 * pi))
    # Z/x must not vanish, otherwise m1 and lam have poles.  (lam cannot be
    # positive everywhere: with F = Im(Z' conj Z), 2 pi lam |Z|^2 = a^2 F' - m3 F
    # and F vanishes at both ends, so some region always feeds energy in.)
    xs = np.linspace(0, 1, 401)
    reduced = sp.lambdify(_X, sp.expand(Z / _X), "numpy")(xs) * np.ones_like(xs)
    if np.abs(reduced).min() < 1e-3:
        raise ValueError("the shape Z vanishes inside (0, 1]")
    u, p, q = (ex.SYMBOLS[s] for s in ("u", "p", "q"))
    k = _rat(radial_damping)
    absZ2 = sp.expand(Zr**2 + Zi**2)
    bexpr = m1 * u + lam * p + m3 * q + k * (u**2 + p**2 / (4 * pi**2) - absZ2) * p
    u0 = sp.expand(Zr * sp.cos(2 * pi * _T) - Zi * sp.sin(2 * pi * _T))
    doc = {
        "kind": "second_order",
        "name": "harmonic_wave",
        "speed": sp.sstr(a),
        "nonlinearity": sp.sstr(bexpr),
        "gamma": float(gamma),
        "unforced": sp.sstr(u0),
    }
    if forcing is not None:
        doc["forcing"] = forcing
    if boundary_forcing is not None:
        doc["boundary_forcing"] = list(boundary_forcing)
    problem, sol = load_problem(doc)
    sol.meta.update({"Z": Z, "gamma_exact": gamma, "damping": lam})
    return problem, sol


def counterexample_eq(harmonics=(1.0,)):
    """Undamped wave with speed 4 and a Neumann end: a continuum of solutions.

    ``u0 = (1/8) int_0^x Psi(4t + y) + Psi(4t - y) dy`` with the 2-antiperiodic
    profile ``Psi(s) = sum_m c_m sin((2m+1) pi s / 2)``.
    """
    s, y = sp.symbols("s y", real=True)
    psi = sum(sp.nsimplify(c) * sp.sin((2 * m + 1) * sp.pi * s / 2) for m, c in enumerate(harmonics))
    integrand = psi.subs(s, 4 * _T + y) + psi.subs(s, 4 * _T - y)
    u0 = sp.simplify(sp.integrate(integrand, (y, 0, _X)) / 8)
    doc = {
        "kind": "second_order",
        "name": "wave_counterexample",
        "speed": "4",
        "nonlinearity": "0",
        "gamma": 0.0,
        "unforced": sp.sstr(u0),
    }
    return load_problem(doc)


_FAMILIES = {
    "ellipse": ("system", manufacture_system, True),
    "transport_counterexample": ("system", counterexample_sys, False),
    "harmonic_wave": ("second_order", manufacture_second_order, True),
    "wave_counterexample": ("second_order", counterexample_eq, False),
}


def _from_recipe(doc: dict):
    recipe = doc["manufactured"]
    family = recipe.get("family")
    if family not in _FAMILIES:
        raise ValueError(f"unknown manufactured family {family!r}; known: {sorted(_FAMILIES)}")
    kind, build, forcible = _FAMILIES[family]
    if doc.get("kind", kind) != kind:
        raise ValueError(f"family {family!r} builds a {kind} problem, not {doc['kind']}")
    params = dict(recipe.get("parameters", {}))
    forcing = {k: doc[k] for k in ("forcing", "boundary_forcing") if doc.get(k) is not None}
    if forcing and not forcible:
        raise ValueError(f"family {family!r} takes no forcing")
    try:
        return build(**params, **forcing)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {family!r}: {exc}") from exc


def load_problem(doc: dict):
    """Build ``(problem, unforced_solution)`` from a JSON-style description.

    Either the coefficients are given as expression strings, or a
    ``manufactured`` block names a reference family and its parameters.
    """
    if doc.get("manufactured") is not None:
        return _from_recipe(doc)
    kind = doc.get("kind", "system")
    if kind == "system":
        problem = SystemProblem.from_expressions(doc)
        sol = None
        if doc.get("unforced") is not None:
            sol = UnforcedSolution.from_expressions(doc["unforced"], 2)
            problem.expressions["unforced"] = list(sol.expressions)
        return problem, sol
    if kind == "second_order":
        problem = SecondOrderProblem.from_expressions(doc)
        sol = None
        if doc.get("unforced") is not None:
            sol = UnforcedSolution.from_expressions([doc["unforced"]], 1)
            problem.expressions["unforced"] = sol.expressions[0]
        return problem, sol
    raise ValueError(f"unknown problem kind {kind!r}")
