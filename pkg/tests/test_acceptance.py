"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are printed together at the end of the pytest run.
"""
import math
import time

import numpy as np

import test_properties as props
from hyperlock import charops as co
from hyperlock import linsolve as ls
from hyperlock.cli import main
from hyperlock.field import Numerics, PeriodicField
from hyperlock.locking import nearest_root, seed_solution, solve_locked, sys2_diagnostic, system_context
from hyperlock.phase import formal_phase_check, phi_curve_eq
from hyperlock.problem import beta0, counterexample_eq, counterexample_sys, load_problem
from hyperlock.secondorder import check_nonres_eq, phi_curve_fos

from conftest import LADDER, TAU0

FINE = Numerics(modes=32, n_x=129)
NUM = Numerics(modes=16, n_x=65)


def test_integral_form_of_the_manufactured_solution(ellipse, criterion):
    p, sol = ellipse
    start = time.perf_counter()
    u0 = sol.field(FINE)
    form = co.SystemForm(p, FINE, u0)
    abstract = PeriodicField(form.residual_abstract(0.0, 1.0, u0.coef), FINE.x_nodes).sup_norm()
    bulk, edge = form.residual_pde(0.0, 1.0, u0.coef)
    pde = max(PeriodicField(bulk, FINE.x_nodes).sup_norm(), float(np.abs(edge).max()))
    elapsed = time.perf_counter() - start
    ok = abstract < 1e-8 and pde < 1e-8 and elapsed < 5.0
    criterion(1, ok, f"integral residual {abstract:.1e}, PDE residual {pde:.1e}, {elapsed:.2f} s")
    assert ok


def test_boundary_trace_inversion(ellipse, rng, criterion):
    p, sol = ellipse
    u0 = sol.field(FINE)
    b0 = beta0(p, u0)
    form = co.SystemForm(p, FINE, u0)
    worst, ratios = 0.0, []
    for period in (0.95, 1.0, 1.05):
        ch = form.chars(period)
        for _ in range(20):
            coef = np.zeros((2, FINE.n_x, FINE.modes + 1), complex)
            coef[..., :6] = rng.standard_normal((2, FINE.n_x, 6)) + 1j * rng.standard_normal((2, FINE.n_x, 6))
            coef[..., 0] = coef[..., 0].real
            f = PeriodicField(coef, FINE.x_nodes)
            out = ls.solve_I_minus_CR(period, b0, f, p)
            res = f.like(out.solution.coef - ch.apply_C(ch.reflect(out.solution.coef)) - f.coef)
            worst = max(worst, res.sup_norm())
            ratios.append(out.iterations / out.predicted_iterations)
    simple = load_problem({"kind": "system", "speeds": ["1", "-1"], "nonlinearity": ["0", "0"],
                           "reflection": [0.5, 0.5]})[0]
    one = PeriodicField.from_function(lambda t, x: np.ones((2,) + t.shape), FINE.modes, FINE.x_nodes)
    const = ls.solve_I_minus_CR(1.0, PeriodicField.zeros(2, FINE.modes, FINE.x_nodes), one, simple)
    const_err = float(np.abs(const.solution.values() - 2.0).max())
    ok = worst < 1e-8 and 0.5 <= min(ratios) and max(ratios) <= 2.0 and const_err < 1e-12
    criterion(2, ok, f"60 solves: residual {worst:.1e}, iterations/predicted in "
                     f"[{min(ratios):.2f}, {max(ratios):.2f}]; constant case error {const_err:.1e}")
    assert ok


def test_resonant_instances_are_rejected(tmp_path, criterion):
    p, sol = counterexample_sys()
    sys_margin = max(ls.check_nonres_sys(p, sol.field(NUM)).margins)
    p2, sol2 = counterexample_eq()
    eq_margin = max(check_nonres_eq(p2, sol2.field(NUM), NUM).margins)
    codes = (main(["check-nonres", "counterexample", "--out", str(tmp_path / "a")]),
             main(["check-nonres", "counterexample_eq", "--out", str(tmp_path / "b")]))
    ok = sys_margin < 1e-10 and eq_margin < 1e-10 and codes == (2, 2)
    criterion(3, ok, f"margins {sys_margin:.1e} (system), {eq_margin:.1e} (second order); exit codes {codes}")
    assert ok


def test_adjoint_solutions(ellipse, ellipse_adjoint, wave_adjoint, criterion):
    _, sol = ellipse
    adj = ellipse_adjoint
    pairing = sol.field(NUM).dt().l2_inner(adj.u_star)
    eq = wave_adjoint
    ok = (adj.residual < 1e-6 and abs(pairing - 1.0) < 1e-6 and adj.kernel_gap > 10
          and eq.difference_defect < 1e-6 and abs(eq.normalization_eq - 1.0) < 1e-5)
    criterion(4, ok, f"residual {adj.residual:.1e}, pairing {pairing:.9f}, gap {adj.kernel_gap:.1e}; "
                     f"second order: difference identity {eq.difference_defect:.1e}, "
                     f"normalization {eq.normalization_eq:.9f}")
    assert ok


def test_fredholm_structure(ellipse, ellipse_adjoint, rng, criterion):
    p, sol = ellipse
    form = co.SystemForm(p, NUM, sol.field(NUM))
    mat = ls.dense_matrix(lambda w: form.apply_linearized(1.0, w), ls.field_shape(2, NUM))
    sv = ls.smallest_singular(mat, k=2)
    one_small = sv.values[0] < 1e-6 * sv.values[1]
    ustar = ellipse_adjoint.u_star
    worst = 0.0
    x = NUM.x_nodes
    basis = np.stack([x**i for i in range(5)])
    for _ in range(50):
        # smooth in x: the functional differentiates along x
        coef = np.zeros((2, NUM.n_x, NUM.modes + 1), complex)
        for k in range(8):
            c = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
            coef[..., k] = c @ basis
        coef[..., 0] = coef[..., 0].real
        w = PeriodicField(coef, x)
        lw = PeriodicField(form.apply_linearized(1.0, w.coef), x)
        worst = max(worst, abs(co.functional_phi(lw, form, ustar)) / max(1.0, w.sup_norm()))
    tangent = PeriodicField(form.chars(1.0).apply_D(form.u0.dt().coef), NUM.x_nodes)
    normal = co.functional_phi(tangent, form, ustar)
    ok = one_small and worst < 1e-6 and abs(normal - 1.0) < 1e-6
    criterion(5, ok, f"smallest singular values {sv.values[0]:.1e}, {sv.values[1]:.1e}; "
                     f"max |phi(Lw)| over 50 w {worst:.1e}; phi(D d_t u0) = {normal:.9f}")
    assert ok


def _empirical_order(eps, gaps):
    slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    steps = [math.log(a / b) / math.log(e1 / e2) for a, b, e1, e2 in zip(gaps, gaps[1:], eps, eps[1:])]
    return float(slope), min(steps)


def test_locked_ladder(ellipse_forced, criterion):
    p, sol = ellipse_forced
    start = time.perf_counter()
    u0 = sol.field(NUM)
    ctx = system_context(p, u0, NUM)
    root = nearest_root(ctx.curve, TAU0, 0.0)
    warm = seed_solution(TAU0, root.phi, ctx)
    ladder = []
    for eps in sorted(LADDER):
        s = solve_locked(eps, TAU0, warm, ctx)
        warm = (s.phi, s.w.coef)
        ladder.append(s)
    ladder.sort(key=lambda s: -s.eps)
    elapsed = time.perf_counter() - start
    eps = np.array([s.eps for s in ladder])
    gaps = np.array([abs((s.phi - root.phi + 0.5) % 1.0 - 0.5) for s in ladder])
    fitted, stepwise = _empirical_order(eps, gaps)
    ratios = np.array([(s.u - u0.shift(root.phi)).sup_norm() / s.eps for s in ladder])
    spread = float(np.abs(ratios / np.median(ratios) - 1.0).max())
    ok = (bool(np.all(np.diff(gaps) < 0)) and fitted >= 0.9 and stepwise >= 0.9
          and spread <= 0.2 and elapsed < 120.0)
    criterion(6, ok, f"phase order {fitted:.3f} (stepwise min {stepwise:.3f}); "
                     f"|u - S u0|/eps in [{ratios.min():.4f}, {ratios.max():.4f}] "
                     f"(spread {100 * spread:.1f}%); {elapsed:.1f} s")
    assert ok


def test_phase_equation_diagnostic(ladder, lock_ctx, criterion):
    out = sys2_diagnostic([(s.eps, s.T, s.u) for s in ladder], lock_ctx)
    values = [abs(e.value) for e in out]
    finest = values[-1]
    last3 = values[-3:]
    ok = all(e.accepted for e in out) and finest < 1e-3 and last3[0] > last3[1] > last3[2]
    criterion(7, ok, "|Phi(phi_k) - (T_k - 1)/eps_k| = " + ", ".join(f"{v:.2e}" for v in values))
    assert ok


def test_second_order_phase_routes(wave_forced, fos_lock, criterion):
    p2, sol = wave_forced
    adj = fos_lock.equation_adjoint
    u0 = sol.field(NUM)
    direct = phi_curve_eq(p2, u0, adj)
    phi = np.arange(512) / 512
    route = float(np.abs(direct(phi) - phi_curve_fos(fos_lock.form, adj)(phi)).max())
    formal = max(formal_phase_check(p2, u0, adj, float(f), float(direct(f))) for f in phi)
    ok = route < 1e-6 and formal < 1e-6
    criterion(8, ok, f"equation vs first-order curve {route:.1e}; formal check {formal:.1e} on 512 phases")
    assert ok


def test_equivariance_suite(criterion):
    props.calls.clear()
    suite = [getattr(props, name) for name in dir(props) if name.startswith("test_")]
    for prop in suite:
        prop()
    counts = dict(props.calls)
    ok = len(counts) == len(suite) and min(counts.values()) >= 100
    criterion(9, ok, f"{len(suite)} properties, {min(counts.values())} to {max(counts.values())} "
                     f"random cases each, tolerance {props.TOL:g}")
    assert ok
