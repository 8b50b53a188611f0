"""Polarization solver tests.

Expected values come from three independent sources: closed forms for
single charges and degenerate regimes, a dense-grid sweep for the inner
minimization, and an exact-inner-min brute force over configuration
grids for two charges on the interval.
"""

import numpy as np
import pytest

from rieszlab.covering import best_covering
from rieszlab.geometry import Ball, Cube, Ellipsoid, Sphere
from rieszlab.kernels import potential
from rieszlab.polarization import (
    SolverOptions,
    inner_min,
    maximize_polarization,
    polarization_curve,
)

LIGHT = SolverOptions(restarts=6, iters=800, tol=1e-4, seed=0, workers=1)


def interval_grid_min(omega, s, step=1e-6):
    """Dense-grid evaluation of the inner minimum on [0,1].

    Direct sweep, no descent and no bounds; serves as an oracle for
    inner_min on interval configurations.
    """
    y = np.arange(0.0, 1.0 + 0.5 * step, step)
    d = np.abs(y[:, None] - np.asarray(omega, dtype=float)[None, :])
    with np.errstate(divide="ignore"):
        f = np.sum(d ** (-float(s)), axis=1)
    i = int(np.argmin(f))
    return float(f[i]), float(y[i])


def two_charge_brute(s, step=1e-3):
    """Exact brute force for two charges on [0,1].

    For charges a <= b the potential is monotone on [0,a) and (b,1] and
    has a single interior minimum at the midpoint of (a,b), so the inner
    minimum is exactly min(f(0), f(1), f((a+b)/2)).  Maximizing that over
    the full (x1,x2) grid gives an oracle independent of the solver.
    """
    g = np.arange(0.0, 1.0 + 0.5 * step, step)
    x1, x2 = g[:, None], g[None, :]
    with np.errstate(divide="ignore"):
        f0 = x1 ** -s + x2 ** -s
        f1 = (1.0 - x1) ** -s + (1.0 - x2) ** -s
        fm = 2.0 * (np.abs(x2 - x1) / 2.0) ** -s
    inner = np.minimum(np.minimum(f0, f1), fm)
    k = int(np.argmax(inner))
    return float(inner.flat[k]), float(g[k // len(g)]), float(g[k % len(g)])


class TestInnerMin:
    def test_single_midpoint_charge(self):
        r = inner_min(Cube(1), np.array([[0.5]]), 3.0, tol=1e-4)
        assert abs(r.value - 8.0) <= 1e-9 * 8.0
        w = float(r.witness[0])
        assert min(w, 1.0 - w) <= 1e-6
        assert r.certified

    def test_ball_center_charge(self):
        r = inner_min(Ball(2), np.zeros((1, 2)), 4.0, tol=1e-4)
        # minimum attained on the whole unit circle; the flat witness set
        # slows certification but the value itself is pinned
        assert abs(r.value - 1.0) <= 1e-7
        assert abs(np.linalg.norm(r.witness) - 1.0) <= 1e-9
        assert r.bracket[0] <= r.value <= r.bracket[1]

    def test_two_charges_match_grid_oracle(self):
        om = [0.25, 0.75]
        oracle, y_star = interval_grid_min(om, 2.0)
        assert abs(oracle - 160.0 / 9.0) <= 1e-9 * oracle
        assert min(y_star, 1.0 - y_star) <= 1e-6
        r = inner_min(Cube(1), np.array(om).reshape(-1, 1), 2.0, tol=1e-4)
        assert abs(r.value - oracle) <= 1e-4 * oracle
        assert r.certified
        w = float(r.witness[0])
        assert min(w, 1.0 - w) <= 1e-6

    def test_certified_means_tight(self):
        r = inner_min(Cube(1), np.array([[0.3], [0.6]]), 3.0, tol=1e-4)
        assert r.certified
        assert r.bracket[1] - r.bracket[0] <= 1e-4 * abs(r.bracket[1])

    def test_budget_exhaustion_flags(self):
        r = inner_min(Cube(1), np.array([[0.25], [0.75]]), 2.0,
                      tol=1e-4, max_levels=1)
        assert not r.certified
        assert r.bracket[0] <= r.value <= r.bracket[1]

    def test_rejections(self):
        with pytest.raises(ValueError):
            inner_min(Cube(1), np.array([[0.5]]), 0.0, tol=1e-4)
        with pytest.raises(ValueError):
            inner_min(Cube(1), np.array([[0.5]]), 3.0, tol=0.0)
        with pytest.raises(ValueError):
            inner_min(Cube(1), np.array([[2.0]]), 3.0, tol=1e-4)


class TestMaximize:
    @pytest.mark.parametrize("s", [3.0, 5.0, 10.0])
    def test_single_charge_interval(self, s):
        r = maximize_polarization(Cube(1), 1, s, LIGHT)
        assert abs(r.value - 2.0 ** s) <= 1e-9 * 2.0 ** s
        assert abs(float(r.config[0, 0]) - 0.5) <= 1e-9
        assert r.certified

    @pytest.mark.parametrize("d", [2, 3])
    def test_single_charge_ball(self, d):
        r = maximize_polarization(Ball(d), 1, 4.0, LIGHT)
        assert r.value == 1.0
        assert np.all(r.config == 0.0)
        assert r.certified

    def test_ball_degenerate_closed_form(self):
        r = maximize_polarization(Ball(3), 5, 1.0, LIGHT)
        assert r.value == 5.0
        assert np.all(r.config == 0.0)
        assert r.certified

    def test_rejections(self):
        with pytest.raises(ValueError):
            maximize_polarization(Ellipsoid((1.0, 0.7, 0.5)), 3, 1.0, LIGHT)
        with pytest.raises(ValueError):
            maximize_polarization(Cube(1), 0, 3.0, LIGHT)

    def test_two_charges_match_brute_force(self):
        brute, b1, b2 = two_charge_brute(3.0)
        r = maximize_polarization(Cube(1), 2, 3.0, LIGHT)
        assert abs(r.value - brute) <= 5e-3 * brute
        c = np.sort(r.config.ravel())
        assert abs(c[0] - b1) <= 5e-3 and abs(c[1] - b2) <= 5e-3

    def test_two_charges_exact_anchor(self):
        # equalizing f(0) = f(1) = f(midpoint) at s=2 gives config
        # (1 -+ 3^(-1/2))/2 and value exactly 24
        r = maximize_polarization(Cube(1), 2, 2.0, LIGHT)
        assert abs(r.value - 24.0) <= 1e-5 * 24.0
        t = (1.0 - 1.0 / np.sqrt(3.0)) / 2.0
        c = np.sort(r.config.ravel())
        assert np.abs(c - [t, 1.0 - t]).max() <= 1e-4

    def test_monotone_in_N(self):
        vals = [maximize_polarization(Cube(1), n, 3.0, LIGHT).value
                for n in (1, 2, 3)]
        assert vals[1] >= vals[0] * (1.0 - 1e-6)
        assert vals[2] >= vals[1] * (1.0 - 1e-6)

    @pytest.mark.parametrize("n", [2, 3])
    def test_interval_reflection_symmetry(self, n):
        r = maximize_polarization(Cube(1), n, 3.0, LIGHT)
        c = np.sort(r.config.ravel())
        assert np.abs(c + c[::-1] - 1.0).max() <= 1e-6

    def test_circle_equal_spacing(self):
        # three charges on the circle: equally spaced, worst point the
        # antipode of a charge, value 1/4 + 1 + 1 = 9/4
        r = maximize_polarization(Sphere(1), 3, 2.0, LIGHT)
        assert abs(r.value - 2.25) <= 1e-6 * 2.25
        assert np.abs(np.linalg.norm(r.config, axis=1) - 1.0).max() <= 1e-9
        ang = np.sort(np.arctan2(r.config[:, 1], r.config[:, 0]))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
        assert gaps.max() - gaps.min() <= 1e-6

    def test_result_invariants(self):
        r = maximize_polarization(Cube(2), 5, 4.0, LIGHT)
        pot = potential(r.config, r.witness, 4.0)
        assert abs(r.value - pot) <= 1e-9 * abs(pot)
        assert r.bracket[0] <= r.value <= r.bracket[1]
        if r.certified:
            assert r.bracket[1] - r.bracket[0] <= 1e-4 * abs(r.value)
        assert r.witness_gap > 0.0
        for key in ("restarts", "iterations", "mesh_fill", "seed"):
            assert key in r.solver_stats
        assert all(Cube(2).contains(p) for p in r.config)
        assert Cube(2).contains(r.witness)

    def test_worker_count_invariance(self):
        opts1 = SolverOptions(restarts=6, iters=400, tol=1e-4, seed=3,
                              workers=1)
        opts8 = SolverOptions(restarts=6, iters=400, tol=1e-4, seed=3,
                              workers=8)
        r1 = maximize_polarization(Cube(2), 6, 4.0, opts1)
        r8 = maximize_polarization(Cube(2), 6, 4.0, opts8)
        assert r1.value == r8.value
        assert np.array_equal(r1.config, r8.config)
        assert np.array_equal(r1.witness, r8.witness)

    def test_scale_covariance_of_potential(self):
        # |Lx - Ly|^(-s) = L^(-s) |x-y|^(-s); configuration-level identity
        # that a rescaled-domain solve would inherit
        rng = np.random.default_rng(11)
        om = rng.uniform(0.1, 0.9, (5, 2))
        y = rng.uniform(0.1, 0.9, 2)
        for s in (2.0, 4.5):
            a = potential(2.0 * om, 2.0 * y, s) * 2.0 ** s
            b = potential(om, y, s)
            assert abs(a - b) <= 1e-12 * abs(b)

    def test_beats_covering_configuration(self):
        A = Cube(2)
        cov = best_covering(A, 8, tol=1e-4).points
        ref = inner_min(A, cov, 4.0, tol=1e-4)
        r = maximize_polarization(A, 8, 4.0, LIGHT)
        assert r.value >= ref.value * (1.0 - 3e-4)


class TestCurve:
    def test_interval_curve(self):
        curve = polarization_curve(Cube(1), 4.0, [1, 2, 4], LIGHT)
        vals = [r.value for r in curve]
        assert vals[0] < vals[1] < vals[2]
        # normalized values rise toward the large-N limit (about 32.5 at
        # s=4: interior spacing delta with end offsets near delta/2)
        norm = [v / n ** 4 for v, n in zip(vals, (1, 2, 4))]
        assert norm[0] < norm[1] < norm[2] < 40.0
        # chain against the exact interval covering radius 1/(2N)
        for r, n in zip(curve, (1, 2, 4)):
            assert r.value >= (2.0 * n) ** 4 * (1.0 - 1e-6)

    def test_requires_increasing_sizes(self):
        with pytest.raises(ValueError):
            polarization_curve(Cube(1), 3.0, [2, 2], LIGHT)
