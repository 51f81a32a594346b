"""Adjoint periodic solutions.

The adjoint system is again a transport pair (same speeds, boundary nodes
swapped), so it is written in integral form with the operators of
``charops`` and its kernel is extracted as the smallest singular direction of
the assembled matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charops import Characteristics, SystemForm, Transport, pairing, to_modes, to_phys, transport_derivative
from .field import BoundarySignal, Numerics, PeriodicField
from .linsolve import dense_matrix, field_shape, smallest_singular, unpack_field
from .problem import SystemProblem

ADJOINT_NUMERICS = Numerics(modes=16, n_x=65)
GAP_MIN = 10.0
PAIRING_MIN = 1e-8


class AdjointError(RuntimeError):
    """The adjoint kernel is not simple or not transversal to the orbit tangent."""


@dataclass
class AdjointSolution:
    u_star: PeriodicField
    normalization_value: float
    kernel_gap: float
    singular_values: np.ndarray
    residual: float = float("nan")
    boundary_residual: float = float("nan")
    extras: dict = field(default_factory=dict)


class SystemAdjoint:
    """Integral form of the adjoint linearization of a system around ``u0``."""

    def __init__(self, form: SystemForm):
        self.form = form
        p = form.problem
        num = form.numerics
        self.transport = Transport.adjoint_of_system(p)
        dspeed = self.transport.dspeed_values(num.x_nodes)
        beta = -form.beta0.copy()
        beta[..., 0] += dspeed
        self.beta = beta
        self.chars = Characteristics(self.transport, 1.0, beta, num)
        self.jac = form.jacobian0

    def coupling(self, v: np.ndarray) -> np.ndarray:
        """``(b_21 v_2, b_12 v_1)`` pointwise."""
        num = self.form.numerics
        vv = to_phys(v, num)
        out = np.stack([self.jac[1, 0] * vv[..., 1, :, :], self.jac[0, 1] * vv[..., 0, :, :]], axis=-3)
        return to_modes(out, num)

    def apply(self, v: np.ndarray) -> np.ndarray:
        ch = self.chars
        return v - ch.apply_C(ch.reflect(v)) - ch.apply_D(self.coupling(v))

    def residual_pde(self, v: np.ndarray):
        """Differential form ``-v_t - (a v)_x + b^T v`` and the two boundary rows."""
        form = self.form
        num = form.numerics
        speed = form.speed
        dspeed = self.transport.dspeed_values(num.x_nodes)
        vv = to_phys(v, num)
        jac = self.jac
        lower = np.stack(
            [jac[0, 0] * vv[0] + jac[1, 0] * vv[1], jac[0, 1] * vv[0] + jac[1, 1] * vv[1]]
        )
        bulk = -transport_derivative(v, 1.0, speed) - dspeed[..., None] * v + to_modes(lower, num)
        r1, r2 = form.problem.reflection
        left = r1 * speed[0, 0] * v[0, 0] + speed[1, 0] * v[1, 0]
        right = r2 * speed[1, -1] * v[1, -1] + speed[0, -1] * v[0, -1]
        return bulk, np.stack([left, right])


def null_direction(apply, shape, tangent: np.ndarray, numerics: Numerics):
    """Normalized kernel vector of ``apply`` with pairing against ``tangent`` equal to one."""
    mat = dense_matrix(apply, shape)
    sv = smallest_singular(mat, k=2)
    raw = unpack_field(sv.right[:, 0], shape)
    value = pairing(tangent, raw, numerics)
    return raw, value, sv


def solve_adjoint_sys(problem: SystemProblem, u0: PeriodicField,
                      numerics: Numerics | None = None) -> AdjointSolution:
    """Adjoint periodic solution ``u*`` normalized by ``<d_t u0, u*> = 1``."""
    numerics = numerics or ADJOINT_NUMERICS
    form = SystemForm(problem, numerics, u0)
    return adjoint_from_form(form)


def adjoint_from_form(form: SystemForm) -> AdjointSolution:
    num = form.numerics
    adj = SystemAdjoint(form)
    tangent = PeriodicField(form.u0.coef, num.x_nodes).dt().coef
    raw, value, sv = null_direction(adj.apply, field_shape(2, num), tangent, num)
    if sv.gap <= GAP_MIN:
        raise AdjointError("adjoint kernel not numerically simple")
    if abs(value) < PAIRING_MIN:
        raise AdjointError("non-transversal kernel (keradsys fails)")
    ustar = raw / value
    bulk, edge = adj.residual_pde(ustar)
    return AdjointSolution(
        PeriodicField(ustar, num.x_nodes),
        float(value),
        float(sv.gap),
        sv.values,
        PeriodicField(bulk, num.x_nodes).sup_norm(),
        BoundarySignal(edge).sup_norm(),
    )
