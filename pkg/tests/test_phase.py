import numpy as np
import pytest

from hyperlock import charops as co
from hyperlock._grid import trig_eval
from hyperlock.field import Numerics
from hyperlock.phase import (
    PhaseCurve,
    PhaseError,
    find_locked_phases,
    formal_phase_check,
    locking_interval,
    phase_modes,
    phi_curve_eq,
    phi_curve_sys,
)
from hyperlock.secondorder import phi_curve_fos

from conftest import TAU0

NUM = Numerics(modes=16, n_x=65)
X = NUM.x_nodes


def sine_curve():
    coef = np.zeros(4, complex)
    coef[1] = 0.5j  # 2 Re(c1 e^{-2 pi i phi}) = sin 2 pi phi
    return PhaseCurve(coef)


@pytest.fixture(scope="module")
def forced_curve(ellipse_forced, ellipse_adjoint):
    p, sol = ellipse_forced
    return phi_curve_sys(p, sol.field(NUM), ellipse_adjoint)


def system_modes(ellipse_forced, ellipse_adjoint, source=None, boundary=None):
    p, _ = ellipse_forced
    source = p.forcing_field(NUM).coef if source is None else source
    boundary = p.boundary_field(NUM).coef if boundary is None else boundary
    return phase_modes(source, boundary, ellipse_adjoint.u_star.coef, co.Transport.of_system(p), NUM)


class TestSystemCurve:
    def test_unforced_curve_vanishes(self, ellipse, ellipse_adjoint):
        p, sol = ellipse
        curve = phi_curve_sys(p, sol.field(NUM), ellipse_adjoint)
        assert np.abs(curve.coef).max() == 0.0

    def test_tangent_forcing(self, ellipse, ellipse_adjoint):
        p, sol = ellipse
        source = sol.field(NUM).dt().coef
        coef = phase_modes(source, np.zeros((2, 17), complex), ellipse_adjoint.u_star.coef,
                           co.Transport.of_system(p), NUM)
        assert abs(PhaseCurve(coef)(0.0) + 1.0) < 1e-6

    def test_first_harmonic_forcing_gives_first_harmonic_curve(self, ellipse_forced, ellipse_adjoint):
        modes = system_modes(ellipse_forced, ellipse_adjoint)
        assert np.abs(modes[2:]).max() < 1e-14 * np.abs(modes[1])
        assert abs(modes[0]) < 1e-14

    def test_shift_covariance(self, ellipse_forced, ellipse_adjoint, forced_curve):
        p, _ = ellipse_forced
        psi = 0.137
        # forcing replaced by its shift t -> t + psi
        source = p.forcing_field(NUM).shift(psi).coef
        boundary = p.boundary_field(NUM).shift(psi).coef
        moved = PhaseCurve(system_modes(ellipse_forced, ellipse_adjoint, source, boundary))
        phi = np.linspace(0, 1, 33)
        assert np.abs(moved(phi) - forced_curve.shifted(psi)(phi)).max() < 1e-10
        assert np.abs(moved(phi) - forced_curve(phi - psi)).max() < 1e-10

    def test_linear_in_the_forcing(self, ellipse_forced, ellipse_adjoint, forced_curve):
        p, _ = ellipse_forced
        c = -2.5
        scaled = system_modes(ellipse_forced, ellipse_adjoint, c * p.forcing_field(NUM).coef,
                              c * p.boundary_field(NUM).coef)
        assert np.abs(scaled - c * forced_curve.coef).max() <= 1e-15 * np.abs(forced_curve.coef).max()

    def test_root_count_matches_dense_scan(self, forced_curve):
        dense = np.arange(10**6) / 10**6
        vals = forced_curve(dense)
        for tau in (0.0, TAU0, 0.25, 0.5):
            shifted = vals - tau
            crossings = int(np.count_nonzero(np.sign(shifted) != np.sign(np.roll(shifted, -1))))
            roots = find_locked_phases(forced_curve, tau)
            assert len(roots) == crossings
            assert len(roots) in (0, 2)
            for r in roots:
                assert abs(forced_curve(r.phi) - tau) < 1e-10

    def test_locking_interval_matches_dense_scan(self, forced_curve):
        lo, hi = locking_interval(forced_curve)
        vals = forced_curve(np.arange(10**6) / 10**6)
        assert abs(lo - vals.min()) < 1e-8 and abs(hi - vals.max()) < 1e-8

    def test_mirror_symmetry(self, forced_curve):
        mirrored = PhaseCurve(-forced_curve.coef)
        a = [r.phi for r in find_locked_phases(forced_curve, TAU0)]
        b = [r.phi for r in find_locked_phases(mirrored, -TAU0)]
        assert np.allclose(a, b, atol=1e-12)


class TestRoots:
    def test_sine_roots(self):
        roots = find_locked_phases(sine_curve(), 0.0)
        assert [round(r.phi, 12) for r in roots] == [0.0, 0.5]
        assert abs(roots[0].slope - 2 * np.pi) < 1e-12
        assert abs(roots[1].slope + 2 * np.pi) < 1e-12
        assert all(r.nondegenerate for r in roots)

    def test_no_locking(self):
        assert find_locked_phases(sine_curve(), 2.0) == []

    def test_degenerate_curve(self):
        with pytest.raises(PhaseError, match="degenerate phase curve"):
            find_locked_phases(PhaseCurve(np.array([0.3, 0, 0], complex)), 0.3)

    def test_curve_is_periodic(self, forced_curve):
        phi = np.linspace(0, 1, 17)
        assert np.abs(forced_curve(phi + 1) - forced_curve(phi)).max() < 1e-13
        assert np.abs(forced_curve(phi - 3) - forced_curve(phi)).max() < 1e-13

    def test_exact_derivative(self, forced_curve):
        h = 1e-5
        phi = np.linspace(0, 1, 9)
        fd = (forced_curve(phi + h) - forced_curve(phi - h)) / (2 * h)
        assert np.abs(fd - forced_curve.slope(phi)).max() < 1e-7

    def test_table(self):
        table = sine_curve().table()
        assert table.shape == (512, 3)
        assert np.allclose(table[:, 1], np.sin(2 * np.pi * table[:, 0]), atol=1e-14)


class TestLockingInterval:
    def test_monotone_piece(self):
        lo, hi = locking_interval(sine_curve(), (-1 / 8, 1 / 8))
        assert abs(lo + np.sin(np.pi / 4)) < 1e-14 and abs(hi - np.sin(np.pi / 4)) < 1e-14

    def test_full_period(self):
        lo, hi = locking_interval(sine_curve())
        assert abs(lo + 1) < 1e-14 and abs(hi - 1) < 1e-14

    def test_turning_point_inside(self):
        with pytest.raises(PhaseError):
            locking_interval(sine_curve(), (0.0, 0.5))

    def test_empty_range(self):
        with pytest.raises(PhaseError):
            locking_interval(sine_curve(), (0.3, 0.2))


class TestEquationCurve:
    def test_unforced_curve_vanishes(self, wave, wave_adjoint):
        p2, sol = wave
        assert np.abs(phi_curve_eq(p2, sol.field(NUM), wave_adjoint).coef).max() == 0.0

    def test_boundary_term_alone(self, wave, wave_adjoint):
        p2, sol = wave
        forced = p2.with_forcing(boundary_forcing=lambda t: np.stack([0 * t, np.sin(2 * np.pi * t)]))
        curve = phi_curve_eq(forced, sol.field(NUM), wave_adjoint)
        n = 256
        t = np.arange(n) / n
        trace = wave_adjoint.u_star.trace(-1).values(n)[0]
        a1 = float(p2.a(1.0))
        for phi in (0.0, 0.3, 0.71):
            direct = -a1**2 * np.mean(np.sin(2 * np.pi * (t - phi)) * trace)
            assert abs(curve(phi) - direct) < 1e-8

    def test_agrees_with_first_order_route(self, wave_forced, fos_lock):
        p2, sol = wave_forced
        adj = fos_lock.equation_adjoint
        direct = phi_curve_eq(p2, sol.field(NUM), adj)
        phi = np.arange(512) / 512
        assert np.abs(direct(phi) - fos_lock.curve(phi)).max() < 1e-6
        assert np.abs(direct(phi) - phi_curve_fos(fos_lock.form, adj)(phi)).max() < 1e-6


class TestFormalCheck:
    def test_on_the_curve(self, wave_forced, fos_lock):
        p2, sol = wave_forced
        adj = fos_lock.equation_adjoint
        curve = phi_curve_eq(p2, sol.field(NUM), adj)
        for phi in np.linspace(0, 1, 16, endpoint=False):
            assert formal_phase_check(p2, sol.field(NUM), adj, phi, float(curve(phi))) < 1e-6

    def test_unforced(self, wave, wave_adjoint):
        p2, sol = wave
        assert formal_phase_check(p2, sol.field(NUM), wave_adjoint, 0.3, 0.0) == 0.0

    def test_offset_is_measured(self, wave_forced, fos_lock):
        p2, sol = wave_forced
        adj = fos_lock.equation_adjoint
        curve = phi_curve_eq(p2, sol.field(NUM), adj)
        phi = 0.2
        defect = formal_phase_check(p2, sol.field(NUM), adj, phi, float(curve(phi)) + 0.1)
        assert abs(defect - 0.1 * abs(adj.normalization_eq)) < 1e-6
        assert abs(defect - 0.1) < 1e-6


def test_trig_eval_convention():
    coef = np.array([0.25, 0.5 - 0.25j, 0.1j])
    phi = np.linspace(0, 1, 7)
    expected = 0.25 + 2 * np.real(coef[1] * np.exp(-2j * np.pi * phi) + coef[2] * np.exp(-4j * np.pi * phi))
    assert np.allclose(trig_eval(coef, phi), expected, atol=1e-15)
