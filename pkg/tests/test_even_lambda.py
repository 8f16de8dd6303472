import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggdiff.core import ParameterError, alpha_max, is_divergent, q_from_alpha
from aggdiff.even_lambda import (FIXED_POINT_RTOL, BetaState, NonMonotoneError, bracket_crossing,
                                 critical_q_even, critical_window, density_even, fixed_point_map,
                                 jacobian_fixed_point, mass_curve, mass_even, monotonicity_scan,
                                 residual_I, solve_betas)
from aggdiff.quartic import (critical_q4, density_eval_quartic, kappa, mass_at, second_moment_F, solve_B,
                             solve_minimizer_quartic)
from aggdiff.specfun import even_kernel_coefficients, kernel_K
from oracles import BETA_4_6_L0, BETA_4_6_L1, MASS_4_6_L1

Q46 = q_from_alpha(4, 6, 0.5)  # = 0.5


def test_lambda2_has_no_unknowns():
    q = 0.65
    st = solve_betas(5, 1, q, 0.3)
    assert st.converged and st.beta.size == 0 and st.lam == 2.0
    r = np.array([0.1, 1.0, 7.0])
    amp = (q / (1 - q)) ** (1 / (1 - q))
    assert density_even(st, r) == pytest.approx(amp * (r * r + 0.3) ** (-1 / (1 - q)), rel=1e-13)


def test_n2_density_matches_quartic():
    sol = solve_minimizer_quartic(6, 0.63)
    st = BetaState(6, 2, 0.63, sol.L, np.array([sol.B]), 0.0, True)
    r = np.geomspace(1e-3, 1e3, 25)
    assert density_even(st, r) == pytest.approx(density_eval_quartic(sol, r), rel=1e-12)


def test_n2_map_matches_quartic():
    for L, B in [(0.0, 3.0), (0.7, 5.0)]:
        F = fixed_point_map(6, 2, 0.6, L, [B])[0]
        assert F == pytest.approx(kappa(6) * second_moment_F(6, 0.6, L, B), rel=1e-10)


def test_tail_slope():
    st = solve_betas(4, 3, Q46, 0.0)
    r = np.array([1e3, 2e3])
    ld = np.log(density_even(st, r))
    assert (ld[1] - ld[0]) / math.log(2) == pytest.approx(-6 / (1 - Q46), rel=1e-3)


def test_frozen_fixed_points():
    st = solve_betas(4, 3, Q46, 0.0)
    assert st.beta == pytest.approx(BETA_4_6_L0, rel=1e-10)
    st = solve_betas(4, 3, Q46, 1.0)
    assert st.beta == pytest.approx(BETA_4_6_L1, rel=1e-10)
    assert mass_even(st) == pytest.approx(MASS_4_6_L1, rel=1e-9)


def test_jacobian():
    beta = np.array(BETA_4_6_L0)
    J = jacobian_fixed_point(4, 3, Q46, 0.0, beta)
    assert np.all(J < 0)
    fd = np.empty_like(J)
    for j in range(2):
        h = 1e-5 * beta[j]
        e = np.zeros(2)
        e[j] = h
        fd[:, j] = (fixed_point_map(4, 3, Q46, 0.0, beta + e) - fixed_point_map(4, 3, Q46, 0.0, beta - e)) / (2 * h)
    assert np.max(np.abs(J - fd) / np.abs(fd)) < 1e-5
    assert jacobian_fixed_point(6, 2, 0.6, 0.0, [3.0]).shape == (1, 1)
    assert jacobian_fixed_point(6, 2, 0.6, 0.0, [3.0])[0, 0] < 0


def test_residual_I():
    assert residual_I(4, 3, Q46, 0.0, [1.0, 1.0]) > 0
    B = solve_B(6, 0.6, 0.0)
    assert residual_I(6, 2, 0.6, 0.0, [B]) < 1e-18


@given(N=st.integers(3, 6), n=st.integers(2, 5), t=st.floats(0.05, 0.95), L=st.sampled_from([0.0, 0.5, 3.0]))
@settings(max_examples=20, deadline=None)
def test_converged_states_satisfy_fixed_point(N, n, t, L):
    lo, hi = critical_window(N, 2 * n, 1e-3)
    hi = min(N / (N + 2), hi + 0.3 * (N / (N + 2) - hi))
    q = lo + t * (hi - lo)
    st = solve_betas(N, n, q, L)
    if st.converged:
        assert np.all(st.beta > 0)
        F = fixed_point_map(N, n, q, L, st.beta)
        assert np.all(np.abs(st.beta - F) < FIXED_POINT_RTOL * np.maximum(1.0, st.beta))
        assert residual_I(N, n, q, L, st.beta) < 1e-14


@pytest.mark.parametrize("N,q,L", [(6, 0.6, 0.0), (6, 0.63, 0.2), (3, 0.45, 1.0), (8, 0.7, 5.0)])
def test_quartic_reduction(N, q, L):
    st = solve_betas(N, 2, q, L)
    assert st.beta[0] == pytest.approx(solve_B(N, q, L), rel=1e-8)
    m = mass_even(st)
    ref = mass_at(N, q, L)
    assert (is_divergent(m) and is_divergent(ref)) or m == pytest.approx(ref, rel=1e-8)


def test_initialization_independence():
    a = solve_betas(5, 4, 0.49, 0.0)
    b = solve_betas(5, 4, 0.49, 0.0, init=a.beta * np.array([3.0, 0.2, 5.0]))
    assert a.converged and b.converged
    assert b.beta == pytest.approx(a.beta, rel=1e-8)


def test_solve_validation():
    with pytest.raises(ParameterError):
        solve_betas(4, 3, 0.9, 0.0)
    with pytest.raises(ParameterError):
        solve_betas(4, 3, 0.5, -1.0)
    with pytest.raises(ParameterError):
        solve_betas(4, 3, 0.5, 0.0, init=[1.0])


def test_table_crossing_state():
    q = q_from_alpha(3, 10, 0.81)
    st = solve_betas(3, 5, q, 0.0)
    assert st.converged
    assert mass_even(st) == pytest.approx(1.0, abs=0.05)


def test_mass_even_values():
    st = solve_betas(6, 2, 0.6, 0.0)
    assert mass_even(st) == pytest.approx(0.75, rel=1e-8)
    st = solve_betas(4, 3, Q46, 1e6)
    assert mass_even(st) < 1e-3


def test_monotonicity_scans():
    grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]
    rep = monotonicity_scan(4, 3, Q46, grid)
    assert rep.monotone and all(rep.converged)
    assert is_divergent(rep.masses[0])
    rep = monotonicity_scan(6, 2, 0.6, grid)
    assert rep.monotone
    for L, m in zip(grid, rep.masses):
        assert m == pytest.approx(mass_at(6, 0.6, L), rel=1e-8)
    rep = monotonicity_scan(4, 3, Q46, [2.0])
    assert rep.monotone
    with pytest.raises(ParameterError):
        monotonicity_scan(4, 3, Q46, [2.0, 1.0])


def test_coefficients_rebuild_kernel():
    g = np.geomspace(0.1, 10, 10)
    r, s = np.meshgrid(g, g)
    for N in (3, 4, 5, 6):
        for n in (1, 2, 3, 4, 5):
            c = even_kernel_coefficients(N, n)
            assert c[0] == 1 and c[n] == 1 and tuple(reversed(c)) == c
            K = sum(float(ci) * r ** (2 * i) * s ** (2 * n - 2 * i) for i, ci in enumerate(c))
            assert K == pytest.approx(kernel_K(N, 2.0 * n, r, s, "gegenbauer"), rel=1e-10)


def test_mass_curve_examples():
    pts = mass_curve(6, 2, np.linspace(0.2, 0.99, 40))
    alphas = [p.alpha for p in pts]
    assert alphas == sorted(alphas) and all(p.converged for p in pts)
    m = np.array([p.m0 for p in pts])
    a = np.array(alphas)
    finite = np.isfinite(m)
    # m0 decreases through 1 between the grid points around 20/21
    above = a[finite & (m > 1)]
    below = a[finite & (m < 1)]
    assert above.max() < 20 / 21 < below.min()
    pts = mass_curve(3, 2, np.linspace(0.05, 0.99, 30))
    assert all(p.m0 > 1 for p in pts)
    pts = mass_curve(3, 3, np.linspace(0.05, 0.99, 30))
    assert all(p.m0 > 1 for p in pts if p.converged)


def test_mass_curve_lambda8_N3_barely_misses():
    pts = mass_curve(3, 4, np.linspace(0.3, 0.99, 30))
    m = [p.m0 for p in pts if p.converged]
    assert min(m) > 1 and min(m) < 1.2


def test_m0_monotone_in_alpha():
    for N in (3, 4, 5, 6):
        for n in (2, 3, 4, 5):
            lo = 0.02
            hi = min(0.99, alpha_max(N, 2 * n))
            pts = [p for p in mass_curve(N, n, np.linspace(lo, hi, 12)[:-1]) if p.converged]
            m = [p.m0 for p in pts]
            assert all(b <= a for a, b in zip(m, m[1:])), (N, n, m)


def test_bracket_crossing():
    assert bracket_crossing(lambda x: x - 0.3, 0.0, 1.0) == pytest.approx((2 / 7, 3 / 7))
    assert bracket_crossing(lambda x: x + 1, 0.0, 1.0) is None
    with pytest.raises(NonMonotoneError):
        bracket_crossing(lambda x: math.sin(10 * x), 0.0, 1.0)


def test_critical_q_even_examples():
    qc, ac = critical_q_even(6, 2, tol=1e-8)
    assert qc == pytest.approx(critical_q4(6), abs=1e-6)
    qc, ac = critical_q_even(4, 3)
    assert qc == pytest.approx(0.42, abs=0.01) and ac == pytest.approx(0.90, abs=0.02)
    qc, ac = critical_q_even(3, 5)
    assert qc == pytest.approx(0.26, abs=0.01) and ac == pytest.approx(0.81, abs=0.02)
    assert critical_q_even(3, 4) is None
    with pytest.raises(ParameterError):
        critical_q_even(4, 1)
