import numpy as np
import pytest

from hyperlock import charops as co
from hyperlock._grid import diff_x
from hyperlock.adjoint import AdjointError, SystemAdjoint, adjoint_from_form, null_direction, solve_adjoint_sys
from hyperlock.field import Numerics, PeriodicField
from hyperlock.linsolve import field_shape
from hyperlock.problem import counterexample_sys
from hyperlock.secondorder import _dt, slot_derivatives

NUM = Numerics(modes=16, n_x=65)
X = NUM.x_nodes


def random_profile(rng, n_comp, powers):
    coef = np.zeros((n_comp, NUM.n_x, NUM.modes + 1), complex)
    basis = np.stack([X**i for i in powers])
    for k in range(4):
        c = rng.standard_normal((n_comp, len(powers))) + 1j * rng.standard_normal((n_comp, len(powers)))
        coef[..., k] = c @ basis
    coef[..., 0] = coef[..., 0].real
    return coef


class TestSystemAdjoint:
    def test_residual_and_pairing(self, ellipse, ellipse_adjoint):
        p, sol = ellipse
        adj = ellipse_adjoint
        assert adj.residual < 1e-6
        assert adj.boundary_residual < 1e-6
        assert adj.kernel_gap > 10
        tangent = sol.field(NUM).dt()
        assert abs(tangent.l2_inner(adj.u_star) - 1.0) < 1e-6

    def test_boundary_rows(self, ellipse, ellipse_adjoint):
        p, _ = ellipse
        us = ellipse_adjoint.u_star
        a = co.Transport.of_system(p).speed_values(np.array([0.0, 1.0]))
        r1, r2 = p.reflection
        left = r1 * a[0, 0] * us.coef[0, 0] + a[1, 0] * us.coef[1, 0]
        right = r2 * a[1, 1] * us.coef[1, -1] + a[0, 1] * us.coef[0, -1]
        assert np.abs(left).max() < 1e-6 and np.abs(right).max() < 1e-6

    def test_scaling_of_the_raw_vector_is_irrelevant(self, ellipse):
        p, sol = ellipse
        num = Numerics(modes=6, n_x=17)
        form = co.SystemForm(p, num, sol.field(num))
        adj = SystemAdjoint(form)
        tangent = sol.field(num).dt().coef
        raw, value, _ = null_direction(adj.apply, field_shape(2, num), tangent, num)
        doubled = 2.0 * raw
        assert np.abs(doubled / co.pairing(tangent, doubled, num) - raw / value).max() < 1e-12

    def test_green_identity(self, ellipse, ellipse_adjoint, rng):
        """<L u, u*> = 0 for u obeying the homogeneous boundary conditions."""
        p, sol = ellipse
        form = co.SystemForm(p, NUM, sol.field(NUM))
        r1, r2 = p.reflection
        for _ in range(3):
            c = random_profile(rng, 2, range(4))
            c[0] += (r1 * c[1, 0] - c[0, 0])[None, :] * (1 - X)[:, None]
            c[1] += (r2 * c[0, -1] - c[1, -1])[None, :] * X[:, None]
            vals = co.to_phys(c, NUM)
            lu = co.transport_derivative(c, 1.0, form.speed) + co.to_modes(
                np.einsum("jkxt,kxt->jxt", form.jacobian0, vals), NUM)
            scale = np.abs(lu).max()
            assert abs(co.pairing(lu, ellipse_adjoint.u_star.coef, NUM)) < 1e-5 * scale

    def test_kernel_of_a_resonant_problem_is_not_simple(self):
        p, sol = counterexample_sys()
        num = Numerics(modes=4, n_x=17)
        with pytest.raises(AdjointError, match="not numerically simple"):
            solve_adjoint_sys(p, sol.field(num), num)

    def test_linear_coupling_has_a_double_kernel(self, ellipse_linear):
        # with b linear in u both u0 and its time derivative solve the linearization
        p, sol = ellipse_linear
        num = Numerics(modes=6, n_x=17)
        with pytest.raises(AdjointError, match="not numerically simple"):
            solve_adjoint_sys(p, sol.field(num), num)

    def test_zero_tangent_is_not_transversal(self, ellipse):
        p, sol = ellipse
        num = Numerics(modes=6, n_x=17)
        form = co.SystemForm(p, num, sol.field(num))
        form.jacobian0, form.beta0  # freeze the coefficients along the true orbit
        form.u0 = PeriodicField.zeros(2, 6, num.x_nodes)
        with pytest.raises(AdjointError, match="non-transversal"):
            adjoint_from_form(form)


class TestEquationAdjoint:
    def test_first_order_adjoint(self, wave_adjoint):
        adj = wave_adjoint.system
        assert adj.residual < 1e-6
        assert adj.kernel_gap > 10

    def test_difference_vanishes_at_the_right_end(self, wave_adjoint):
        assert np.abs(wave_adjoint.u_tilde.coef[0, -1]).max() < 1e-8

    def test_dirichlet_end(self, wave_adjoint):
        assert np.abs(wave_adjoint.u_star.coef[0, 0]).max() < 1e-6

    def test_difference_identity(self, wave_adjoint):
        assert wave_adjoint.difference_defect < 1e-8

    def test_second_order_normalization(self, wave_adjoint):
        assert abs(wave_adjoint.normalization_eq - 1.0) < 1e-5

    def test_green_identity(self, wave, wave_adjoint, rng):
        """<L u, u*> = 0 for u with u(t,0) = 0 and u_x(t,1) + gamma u(t,1) = 0."""
        p2, sol = wave
        grads = slot_derivatives(p2, sol.field(NUM), NUM)
        a = np.asarray(p2.a(X), dtype=float) * np.ones(X.size)
        for _ in range(3):
            c = random_profile(rng, 1, range(1, 5))[0]
            defect = diff_x(c, axis=0)[-1] + p2.gamma * c[-1]
            c = c - (defect / (2 + p2.gamma))[None, :] * (X**2)[:, None]
            ux = diff_x(c, axis=0)
            uxx = diff_x(ux, axis=0)
            lower = grads[0] * co.to_phys(c, NUM) + grads[1] * co.to_phys(_dt(c), NUM) + grads[2] * co.to_phys(ux, NUM)
            lu = _dt(_dt(c)) - (a**2)[:, None] * uxx + co.to_modes(lower, NUM)
            scale = np.abs(lu).max()
            assert abs(co.pairing(lu[None], wave_adjoint.u_star.coef, NUM)) < 1e-5 * scale
