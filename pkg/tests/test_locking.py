import math

import numpy as np
import pytest

from hyperlock.field import Numerics, PeriodicField
from hyperlock.locking import (
    LockingError,
    nearest_root,
    orbit_distance,
    seed_solution,
    solve_locked,
    sweep,
    sys2_diagnostic,
    system_context,
)

from conftest import LADDER, TAU0

SMALL = Numerics(modes=8, n_x=33)


@pytest.fixture(scope="module")
def unforced_ctx(ellipse):
    p, sol = ellipse
    return system_context(p, sol.field(SMALL), SMALL)


@pytest.fixture(scope="module")
def small_sweep(lock_ctx):
    return sweep(1e-2, TAU0, lock_ctx, n_eps=2, n_tau=3)


class TestSeed:
    def test_unforced_seed_is_zero(self, unforced_ctx):
        seed = seed_solution(0.0, 0.3, unforced_ctx)
        assert seed.w.sup_norm() < 1e-12
        assert abs(seed.slack) < 1e-12

    def test_forced_seed(self, lock_ctx, seed0):
        assert seed0.residual < 1e-7
        assert abs(lock_ctx.constraint @ lock_ctx.to_vec(seed0.w.coef)) < 1e-9
        assert abs(seed0.slack) < 1e-6

    def test_slack_measures_the_phase_defect(self, lock_ctx, root0):
        # off the phase curve the bordered solve needs a nonzero slack
        ctx = lock_ctx
        rhs = TAU0 * ctx.period_derivative + ctx.forcing_derivative(root0.phi + 0.05)
        sol = ctx.bordered_solve(np.append(-ctx.to_vec(rhs), 0.0))
        expected = TAU0 - ctx.curve(root0.phi + 0.05)
        assert abs(sol[-1] - expected) < 1e-6

    def test_rejects_a_phase_off_the_curve(self, lock_ctx, root0):
        with pytest.raises(ValueError, match="does not solve the phase equation"):
            seed_solution(TAU0, root0.phi + 0.05, lock_ctx)


class TestNewton:
    def test_ladder_solutions(self, ladder, lock_ctx):
        for sol in ladder:
            assert sol.T == 1.0 + sol.eps * TAU0
            assert sol.residual_pde < 1e-7
            assert sol.residual_abstract < 1e-7
            assert abs(sol.constraint) < 1e-9
            assert sol.newton_iters <= 10

    def test_unforced_family_is_trivial(self, unforced_ctx):
        sol = solve_locked(1e-2, 0.0, (0.3, np.zeros((2, 33, 9), complex)), unforced_ctx)
        assert abs(sol.phi - 0.3) < 1e-10
        assert sol.w.sup_norm() < 1e-9

    @pytest.mark.parametrize("eps", [0.0, -1e-3])
    def test_rejects_nonpositive_eps(self, eps, lock_ctx, seed0):
        with pytest.raises(ValueError):
            solve_locked(eps, TAU0, seed0, lock_ctx)

    def test_local_uniqueness(self, ladder, lock_ctx, rng):
        base = ladder[1]
        dw = rng.standard_normal(lock_ctx.constraint.size)
        dw -= (lock_ctx.constraint @ dw) / (lock_ctx.constraint @ lock_ctx.constraint) * lock_ctx.constraint
        dw *= 1e-3 / np.abs(dw).max()
        start = (base.phi + 1e-3, base.w.coef + lock_ctx.to_coef(dw))
        again = solve_locked(base.eps, TAU0, start, lock_ctx)
        assert abs(again.phi - base.phi) < 1e-8
        assert (again.w - base.w).sup_norm() < 1e-8

    def test_dense_and_krylov_steps_agree(self, lock_ctx, seed0):
        small = 2e-3
        a = solve_locked(small, TAU0, seed0, lock_ctx)
        b = solve_locked(small, TAU0, seed0, lock_ctx, linear="dense")
        assert abs(a.phi - b.phi) < 1e-9 and (a.w - b.w).sup_norm() < 1e-8

    def test_phase_converges_to_the_root(self, ladder, root0):
        gaps = [abs(s.phi - root0.phi) for s in ladder]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 10 * LADDER[-1]

    def test_seed_is_the_limit_of_w(self, ladder, seed0):
        gaps = [(s.w - seed0.w).sup_norm() for s in ladder]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] / LADDER[-1] < 2 * gaps[0] / LADDER[0]


class TestOrbitDistance:
    def test_shifted_orbit(self, ellipse):
        _, sol = ellipse
        u0 = sol.field(SMALL)
        phi, d = orbit_distance(u0.shift(0.3), u0)
        assert abs(phi - 0.3) < 1e-9 and d < 1e-9

    def test_small_perturbation(self, ellipse, rng):
        _, sol = ellipse
        u0 = sol.field(SMALL)
        n = PeriodicField.from_function(
            lambda t, x: np.stack([np.sin(2 * np.pi * t) * x, np.cos(4 * np.pi * t)]), 8, SMALL.x_nodes)
        delta = 1e-3
        phi, d = orbit_distance(u0 + n * delta, u0)
        assert d <= delta * n.sup_norm() + 1e-12
        assert min(phi, 1 - phi) < 1e-2

    def test_half_period_tie_break(self):
        x = SMALL.x_nodes
        u0 = PeriodicField.from_function(
            lambda t, x: np.stack([np.cos(4 * np.pi * t) * (1 + x), np.sin(4 * np.pi * t)]), 8, x)
        phi, d = orbit_distance(u0.shift(0.3), u0)
        # 0.3 and 0.8 are both minimizers; the smaller one wins
        assert abs(phi - 0.3) < 1e-8 and d < 1e-9


class TestDiagnostic:
    def test_unforced_sequence(self, unforced_ctx, ellipse):
        _, sol = ellipse
        u0 = sol.field(SMALL)
        seq = [(eps, 1.0, u0.shift(0.2)) for eps in (1e-2, 5e-3)]
        out = sys2_diagnostic(seq, unforced_ctx)
        assert all(e.accepted and e.value == 0.0 for e in out)

    def test_locked_sequence(self, ladder, lock_ctx):
        out = sys2_diagnostic([(s.eps, s.T, s.u) for s in ladder], lock_ctx)
        values = [abs(e.value) for e in out]
        assert all(e.accepted for e in out)
        assert all(b < a for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-3

    def test_non_solutions_are_flagged(self, ladder, lock_ctx, seed0):
        bad = []
        for s in ladder[:2]:
            u = lock_ctx.field(lock_ctx.u0 + s.eps * seed0.w.coef).shift(s.phi + 0.1)
            bad.append((s.eps, s.T, u))
        out = sys2_diagnostic(bad, lock_ctx)
        assert not any(e.accepted for e in out)
        assert all(math.isnan(e.value) for e in out)


class TestSweep:
    def test_empty_wedge(self, lock_ctx):
        assert sweep(0.0, TAU0, lock_ctx).points == []

    def test_all_points_converge(self, small_sweep):
        assert len(small_sweep.points) == 6
        assert all(p.solution is not None for p in small_sweep.points)
        for row in small_sweep.rows():
            assert row[5] < 1e-7

    def test_asymptotic_phases_solve_the_phase_equation(self, small_sweep, lock_ctx):
        for tau, phi in small_sweep.asymptotic_phases.items():
            assert abs(lock_ctx.curve(phi) - tau) < 1e-10

    def test_one_basin(self, small_sweep):
        phis = np.array([s.phi for s in small_sweep.successes])
        spread = np.abs(((phis - small_sweep.phi0 + 0.5) % 1.0) - 0.5)
        assert spread.max() < 0.1

    def test_scaling_bounds(self, small_sweep):
        sols = small_sweep.successes
        scaled = [(abs(s.T - 1) + s.eps * s.w.sup_norm()) / s.eps for s in sols]
        assert small_sweep.scaling_bound == max(scaled)
        assert max(scaled) < 2 * min(scaled)
        ratios = [s.orbit_ratio for s in sols]
        assert small_sweep.uniform_bound == max(ratios)
        assert max(ratios) < 2 * min(ratios)

    def test_continuity_along_tau(self, small_sweep):
        by_eps = {}
        for s in small_sweep.successes:
            by_eps.setdefault(s.eps, []).append(s)
        for group in by_eps.values():
            group.sort(key=lambda s: s.tau)
            dtau = group[1].tau - group[0].tau
            for a, b in zip(group, group[1:]):
                gap = abs((b.phi - a.phi + 0.5) % 1.0 - 0.5)
                assert gap < 2 * dtau
                assert (b.w - a.w).sup_norm() < 20 * dtau

    def test_no_root(self, lock_ctx):
        with pytest.raises(LockingError, match="no nondegenerate root"):
            sweep(1e-2, 10.0, lock_ctx)
        assert nearest_root(lock_ctx.curve, 10.0, 0.0) is None
