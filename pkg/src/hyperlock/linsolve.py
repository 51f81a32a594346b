"""Inversion of I - C R through the boundary trace, and linear algebra helpers.

The equation ``u = C R u + f`` is determined by the boundary values
``w = R u``.  Eliminating one of them leaves a scalar periodic equation

    w_1 = rho1 rho2 T_2 T_1 w_1 + h

where ``T_j`` carries component j from its boundary node to the other
boundary (a multiplication by ``c_j`` composed with a time shift).  It is
solved by fixed-point iteration when the round-trip factor ``|q| < 1``
everywhere, and by iterating the inverted map when ``|q| > 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from ._grid import grid_to_modes, modes_to_grid, pack, shift_factors, t_grid, unpack
from .charops import Characteristics, SystemForm, Transport, numerics_of
from .field import Numerics, PeriodicField
from .problem import SystemProblem

TRACE_TOL = 1e-13
MARGIN_TOL = 1e-8


class NonResonanceError(RuntimeError):
    """Raised when neither boundary-trace route is a contraction."""


@dataclass
class NonResonanceReport:
    """Margins ``min_t |log|q_k(t)||`` of the two round-trip factors.

    Index 0 refers to the loop that starts at the boundary of component 1
    (condition with the characteristics ending at x = 1 for the system),
    index 1 to the loop starting at the boundary of component 2.
    """

    margins: tuple[float, float]
    c_plus: tuple[float, float]
    c_minus: tuple[float, float]
    routes: tuple[str | None, str | None]
    tolerance: float = MARGIN_TOL
    samples: int = 0

    @property
    def satisfied(self) -> tuple[bool, bool]:
        return tuple(m > self.tolerance for m in self.margins)

    @property
    def any_satisfied(self) -> bool:
        return any(self.satisfied)

    @property
    def preferred(self) -> int | None:
        """Route with the larger margin (ties go to the first)."""
        ok = self.satisfied
        if not any(ok):
            return None
        if ok[0] and (not ok[1] or self.margins[0] >= self.margins[1]):
            return 0
        return 1

    def contraction_factor(self, route: int) -> float:
        if self.routes[route] == "contract":
            return self.c_plus[route]
        if self.routes[route] == "expand":
            return 1.0 / self.c_minus[route]
        return math.inf

    def summary(self) -> str:
        ok = self.satisfied
        if not any(ok):
            return "both conditions violated"
        if all(ok):
            return "both conditions satisfied"
        return f"condition {1 if ok[0] else 2} satisfied, condition {2 if ok[0] else 1} violated"

    def to_dict(self) -> dict:
        return {
            "margins": list(self.margins),
            "satisfied": list(self.satisfied),
            "routes": list(self.routes),
            "c_plus": list(self.c_plus),
            "c_minus": list(self.c_minus),
            "tolerance": self.tolerance,
            "samples": self.samples,
            "summary": self.summary(),
        }


@dataclass
class FunctionalEquationSolve:
    """Outcome of a boundary-trace solve of ``(I - C R) u = f``."""

    solution: PeriodicField
    iterations: int
    contraction_factor: float
    residual: float
    route: int
    mode: str
    history: list = field(default_factory=list)

    @property
    def predicted_iterations(self) -> float:
        return math.log(TRACE_TOL) / math.log(self.contraction_factor)


# ---------------------------------------------------------------------------
# round-trip factors
# ---------------------------------------------------------------------------


def _far_log(chars: Characteristics, j: int) -> np.ndarray:
    """Modes of ``log c_j(t, x_far, x_b)`` as a trig polynomial in t."""
    node = chars.far_end(j)
    return -grid_to_modes(chars.log_kernel[j, node], chars.m) * np.conj(chars.frame[j, node])


def round_trip_log(chars: Characteristics, route: int, n_samples: int) -> np.ndarray:
    """``log|q(t)|`` on ``n_samples`` points for the loop starting at component ``route``."""
    first, second = route, 1 - route
    # q(t) = rho1 rho2 m_second(t) m_first(t + d_second)
    lead = _far_log(chars, second)
    trail = _far_log(chars, first) * shift_factors(chars.m, chars.far_shift(second))
    rho = chars.transport.reflection
    with np.errstate(divide="ignore"):
        base = math.log(abs(rho[0] * rho[1])) if rho[0] * rho[1] != 0 else -math.inf
    return base + modes_to_grid(lead + trail, n_samples).real


def nonresonance(chars: Characteristics, tolerance: float = MARGIN_TOL) -> NonResonanceReport:
    n = max(8 * chars.m, 256)
    margins, cplus, cminus, routes = [], [], [], []
    for route in range(2):
        logq = round_trip_log(chars, route, n)
        margins.append(float(np.min(np.abs(logq))))
        cplus.append(float(np.exp(logq.max())))
        cminus.append(float(np.exp(logq.min())))
        if cplus[-1] < 1.0 and margins[-1] > tolerance:
            routes.append("contract")
        elif cminus[-1] > 1.0 and margins[-1] > tolerance:
            routes.append("expand")
        else:
            routes.append(None)
    return NonResonanceReport(tuple(margins), tuple(cplus), tuple(cminus), tuple(routes), tolerance, n)


def check_nonres_sys(problem: SystemProblem, u0: PeriodicField, numerics: Numerics | None = None,
                     tolerance: float = MARGIN_TOL) -> NonResonanceReport:
    """Non-resonance margins of a system at T = 1 along ``u0``."""
    form = SystemForm(problem, numerics_of(u0, numerics), u0)
    return nonresonance(form.chars(1.0), tolerance)


# ---------------------------------------------------------------------------
# the boundary-trace iteration
# ---------------------------------------------------------------------------


class _Transfer:
    """``T_j`` (exactly the far-end trace of ``C``) and its approximate inverse."""

    def __init__(self, chars: Characteristics):
        self.c = chars

    def forward(self, j: int, w: np.ndarray) -> np.ndarray:
        c = self.c
        node = c.far_end(j)
        wf = modes_to_grid(w * c.base_frame[j], c.n_phys)
        return grid_to_modes(wf * c.exp_mg[j, node], c.m) * np.conj(c.frame[j, node])

    def backward(self, j: int, v: np.ndarray) -> np.ndarray:
        c = self.c
        node = c.far_end(j)
        vf = modes_to_grid(v * c.frame[j, node], c.n_phys)
        return grid_to_modes(vf * c.exp_g[j, node], c.m) / c.base_frame[j]


def _sup(coef: np.ndarray) -> float:
    m = coef.shape[-1] - 1
    return float(np.abs(modes_to_grid(coef, max(8 * m, 2 * m + 2))).max())


def solve_trace_equation(chars: Characteristics, f: np.ndarray, report: NonResonanceReport | None = None,
                         route: int | None = None, tol: float = TRACE_TOL, refine: int = 3):
    """Solve ``u - C R u = f`` for coefficient arrays; returns (u, info dict)."""
    report = report or nonresonance(chars)
    route = report.preferred if route is None else route
    if route is None or report.routes[route] is None:
        raise NonResonanceError("non-resonant inversion unavailable")
    mode = report.routes[route]
    factor = report.contraction_factor(route)
    cap = 10 * max(1, math.ceil(math.log(tol) / math.log(factor)))
    rho = chars.transport.reflection
    tr = _Transfer(chars)
    first, second = route, 1 - route

    def other_trace(w_first, rhs):
        # w_second = rho_second (T_first w_first + F_first)
        return rho[second] * (tr.forward(first, w_first) + rhs[first])

    def solve(rhs):
        h = rho[first] * (rho[second] * tr.forward(second, rhs[first]) + rhs[second])
        gain = rho[0] * rho[1]
        w = np.zeros_like(h)
        history = []
        for it in range(1, cap + 1):
            if mode == "contract":
                new = gain * tr.forward(second, tr.forward(first, w)) + h
            else:
                new = tr.backward(first, tr.backward(second, w - h)) / gain
            step = _sup(new - w)
            history.append(step)
            w = new
            if step <= tol:
                return w, it, history
        raise NonResonanceError(
            f"trace iteration did not converge in {cap} steps (contraction factor {factor:.3g})"
        )

    def assemble(rhs_bulk):
        rhs = [rhs_bulk[..., j, chars.far_end(j), :] for j in range(2)]
        w_first, its, hist = solve(rhs)
        w_second = other_trace(w_first, rhs)
        w = np.empty(rhs_bulk.shape[:-3] + (2, chars.m + 1), dtype=complex)
        w[..., first, :] = w_first
        w[..., second, :] = w_second
        return chars.apply_C(w) + rhs_bulk, its, hist

    u, iterations, history = assemble(f)
    residual = _sup(u - chars.apply_C(chars.reflect(u)) - f)
    rounds = 0
    while residual > tol * 10 and rounds < refine:
        corr, its, _ = assemble(f - (u - chars.apply_C(chars.reflect(u))))
        u = u + corr
        iterations += its
        residual = _sup(u - chars.apply_C(chars.reflect(u)) - f)
        rounds += 1
    info = {
        "iterations": iterations,
        "contraction_factor": factor,
        "residual": residual,
        "route": route,
        "mode": mode,
        "history": history,
    }
    return u, info


def solve_I_minus_CR(period: float, beta: PeriodicField, f: PeriodicField, problem: SystemProblem,
                     route: int | None = None, tol: float = TRACE_TOL) -> FunctionalEquationSolve:
    """Solve ``u - C(T, beta) R u = f`` for a system."""
    numerics = numerics_of(f)
    chars = Characteristics(Transport.of_system(problem), period, beta, numerics)
    u, info = solve_trace_equation(chars, f.coef, route=route, tol=tol)
    return FunctionalEquationSolve(
        f.like(u), info["iterations"], info["contraction_factor"], info["residual"],
        info["route"], info["mode"], info["history"],
    )


# ---------------------------------------------------------------------------
# linearized operator and dense linear algebra
# ---------------------------------------------------------------------------


def apply_linearized(period: float, beta0: PeriodicField, u0: PeriodicField, w: PeriodicField,
                     problem: SystemProblem) -> PeriodicField:
    """``(I - C(T, beta0) R - D(T, beta0) d_u B(beta0, u0)) w``."""
    form = SystemForm(problem, numerics_of(w), u0)
    jac = form.jacobian_at(u0.truncate(form.numerics.modes).coef)
    return w.like(form.apply_linearized(period, w.coef, jac=jac, beta=beta0.coef))


def field_shape(n_components: int, numerics: Numerics) -> tuple[int, int, int]:
    return (n_components, numerics.n_x, numerics.modes + 1)


def dense_matrix(apply, shape: tuple[int, ...], chunk: int = 256) -> np.ndarray:
    """Matrix of a real-linear map on packed coefficient vectors."""
    n = int(np.prod(shape[:-1])) * (2 * shape[-1] - 1)
    mat = np.empty((n, n))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        basis = np.zeros((hi - lo, n))
        basis[np.arange(hi - lo), np.arange(lo, hi)] = 1.0
        coef = unpack(basis.reshape((hi - lo,) + shape[:-1] + (2 * shape[-1] - 1,)))
        out = apply(coef)
        mat[:, lo:hi] = pack(out).reshape(hi - lo, n).T
    return mat


def pack_field(coef: np.ndarray) -> np.ndarray:
    return pack(coef).ravel()


def unpack_field(vec: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return unpack(vec.reshape(shape[:-1] + (2 * shape[-1] - 1,)))


@dataclass
class SmallSingular:
    values: np.ndarray  # ascending
    right: np.ndarray  # columns
    left: np.ndarray  # columns

    @property
    def gap(self) -> float:
        return float(self.values[1] / self.values[0]) if self.values[0] > 0 else math.inf


def smallest_singular(mat: np.ndarray, k: int = 2, dense_limit: int = 1500) -> SmallSingular:
    """The ``k`` smallest singular triplets of a square matrix."""
    n = mat.shape[0]
    if n <= dense_limit:
        u, s, vt = np.linalg.svd(mat)
        order = np.argsort(s)[:k]
        return SmallSingular(s[order], vt[order].T, u[:, order])
    lu = sla.lu_factor(mat)

    def inv_gram(v):
        return sla.lu_solve(lu, sla.lu_solve(lu, v, trans=1))

    op = LinearOperator((n, n), matvec=inv_gram, dtype=float)
    rng = np.random.default_rng(0)
    vals, vecs = eigsh(op, k=k + 1, which="LM", v0=rng.standard_normal(n), tol=1e-12)
    # accurate singular values from the residual norms
    right = vecs / np.linalg.norm(vecs, axis=0)
    images = mat @ right
    sig = np.linalg.norm(images, axis=0)
    order = np.argsort(sig)[:k]
    left = images[:, order] / np.where(sig[order] > 0, sig[order], 1.0)
    return SmallSingular(sig[order], right[:, order], left)
