import math

import numpy as np
import pytest

from hyperlock import charops as co
from hyperlock import linsolve as ls
from hyperlock.field import Numerics, PeriodicField
from hyperlock.problem import beta0, counterexample_sys, load_problem

NUM = Numerics(modes=32, n_x=129)
SMALL = Numerics(modes=16, n_x=65)


def system(speeds=("1", "-1"), nonlinearity=("0", "0"), reflection=(0.5, 0.5)):
    return load_problem({"kind": "system", "speeds": list(speeds), "nonlinearity": list(nonlinearity),
                         "reflection": list(reflection)})[0]


def constant(value, num=NUM):
    return PeriodicField.from_function(lambda t, x: value * np.ones((2,) + t.shape), num.modes, num.x_nodes)


def random_trig(rng, num=NUM, modes=6):
    coef = np.zeros((2, num.n_x, num.modes + 1), complex)
    coef[..., :modes] = rng.standard_normal((2, num.n_x, modes)) + 1j * rng.standard_normal((2, num.n_x, modes))
    coef[..., 0] = coef[..., 0].real
    return PeriodicField(coef, num.x_nodes)


@pytest.fixture(scope="module")
def ellipse_setup(ellipse):
    p, sol = ellipse
    u0 = sol.field(NUM)
    return p, u0, beta0(p, u0), co.SystemForm(p, NUM, u0)


class TestNonResonance:
    def test_uncoupled_transport(self):
        p = system(reflection=(1.0, 0.5))
        rep = ls.check_nonres_sys(p, PeriodicField.zeros(2, 8, NUM.x_nodes))
        assert rep.satisfied == (True, True)
        for margin in rep.margins:
            assert abs(margin - math.log(2)) < 1e-12
        assert rep.routes == ("contract", "contract")

    def test_counterexample_fails_both(self):
        p, sol = counterexample_sys()
        rep = ls.check_nonres_sys(p, sol.field(NUM))
        assert max(rep.margins) < 1e-10
        assert rep.satisfied == (False, False)
        assert rep.summary() == "both conditions violated"

    def test_expanding_reflections(self):
        rep = ls.check_nonres_sys(system(reflection=(2, 2)), PeriodicField.zeros(2, 8, NUM.x_nodes))
        assert rep.routes == ("expand", "expand")
        assert abs(rep.contraction_factor(0) - 0.25) < 1e-12

    def test_ellipse_margins_match_direct_quadrature(self, ellipse_setup):
        p, u0, b0, form = ellipse_setup
        rep = ls.check_nonres_sys(p, u0)
        ch = form.chars(1.0)
        kern = co.CharacteristicKernel(p)
        r1, r2 = p.reflection
        delay = kern.alpha(2, 0.0, 1.0)
        logq = ls.round_trip_log(ch, 0, rep.samples)
        step = rep.samples // 16
        for i in range(0, rep.samples, step):
            t = i / rep.samples
            direct = (math.log(abs(r1 * r2)) + math.log(kern.kernel_c(2, t, 0.0, 1.0, 1.0, b0))
                      + math.log(kern.kernel_c(1, t + delay, 1.0, 0.0, 1.0, b0)))
            assert abs(direct - logq[i]) < 1e-8
        assert abs(rep.margins[0] - np.abs(logq).min()) == 0.0

    def test_report_serializes(self, ellipse_setup):
        p, u0, _, _ = ellipse_setup
        d = ls.check_nonres_sys(p, u0).to_dict()
        assert d["summary"] == "both conditions satisfied"
        assert d["samples"] >= 256


class TestInversion:
    def test_constant_ansatz(self):
        beta = PeriodicField.zeros(2, 32, NUM.x_nodes)
        out = ls.solve_I_minus_CR(1.0, beta, constant(1.0), system())
        assert np.abs(out.solution.values() - 2.0).max() < 1e-12
        assert out.mode == "contract"

    def test_expanding_route(self):
        beta = PeriodicField.zeros(2, 32, NUM.x_nodes)
        out = ls.solve_I_minus_CR(1.0, beta, constant(1.0), system(reflection=(2, 2)))
        assert out.mode == "expand"
        assert np.abs(out.solution.values() + 1.0).max() < 1e-12

    def test_zero_right_hand_side(self):
        beta = PeriodicField.zeros(2, 32, NUM.x_nodes)
        out = ls.solve_I_minus_CR(1.0, beta, constant(0.0), system())
        assert out.iterations == 1
        assert np.abs(out.solution.coef).max() == 0.0

    def test_no_route(self):
        p, sol = counterexample_sys()
        beta = PeriodicField.zeros(2, 32, NUM.x_nodes)
        with pytest.raises(ls.NonResonanceError, match="non-resonant inversion unavailable"):
            ls.solve_I_minus_CR(1.0, beta, constant(1.0), p)

    @pytest.mark.parametrize("period", [0.95, 1.0, 1.05])
    def test_random_right_hand_sides(self, ellipse_setup, period, rng):
        p, _, b0, form = ellipse_setup
        ch = form.chars(period)
        for _ in range(3):
            f = random_trig(rng)
            out = ls.solve_I_minus_CR(period, b0, f, p)
            res = f.like(out.solution.coef - ch.apply_C(ch.reflect(out.solution.coef)) - f.coef)
            assert res.sup_norm() < 1e-8
            assert 0.5 * out.predicted_iterations <= out.iterations <= 2 * out.predicted_iterations

    def test_routes_agree(self, ellipse_setup, rng):
        p, _, b0, _ = ellipse_setup
        f = random_trig(rng)
        first = ls.solve_I_minus_CR(1.0, b0, f, p, route=0).solution
        second = ls.solve_I_minus_CR(1.0, b0, f, p, route=1).solution
        assert (first - second).sup_norm() < 1e-7

    def test_uniform_bound_over_periods(self, ellipse_setup, rng):
        p, _, b0, _ = ellipse_setup
        f = random_trig(rng)
        ratios = [ls.solve_I_minus_CR(T, b0, f, p).solution.sup_norm() / f.sup_norm()
                  for T in np.linspace(0.95, 1.05, 5)]
        assert max(ratios) < 2 * min(ratios)


class TestLinearized:
    def test_tangent_is_in_the_kernel(self, ellipse):
        p, sol = ellipse
        u0 = sol.field(SMALL)
        out = ls.apply_linearized(1.0, beta0(p, u0), u0, u0.dt(), p)
        assert out.sup_norm() < 1e-6

    def test_zero(self, ellipse):
        p, sol = ellipse
        u0 = sol.field(SMALL)
        zero = PeriodicField.zeros(2, 16, SMALL.x_nodes)
        assert np.abs(ls.apply_linearized(1.0, beta0(p, u0), u0, zero, p).coef).max() == 0.0

    def test_dense_matrix_round_trip(self, ellipse, rng):
        p, sol = ellipse
        num = Numerics(modes=4, n_x=9)
        form = co.SystemForm(p, num, sol.field(num))
        shape = ls.field_shape(2, num)
        mat = ls.dense_matrix(lambda w: form.apply_linearized(1.0, w), shape)
        w = random_trig(rng, num, modes=4).coef
        direct = ls.pack_field(form.apply_linearized(1.0, w))
        assert np.abs(mat @ ls.pack_field(w) - direct).max() < 1e-12
        assert np.abs(ls.unpack_field(ls.pack_field(w), shape) - w).max() < 1e-15

    def test_smallest_singular_iterative_matches_dense(self, rng):
        a = rng.standard_normal((40, 40)) + 10 * np.eye(40)
        a[:, 0] *= 1e-3
        dense = ls.smallest_singular(a, k=2)
        sparse = ls.smallest_singular(a, k=2, dense_limit=10)
        assert np.allclose(dense.values, sparse.values, rtol=1e-8)
        assert abs(abs(dense.right[:, 0] @ sparse.right[:, 0]) - 1) < 1e-8
