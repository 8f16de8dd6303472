"""Stationary states for even interaction exponents lambda = 2n.

For lambda = 2n the convolution with |x|^lambda is a polynomial in r^2, and
a stationary density has the form

    rho_{beta,L}(r) = (q/(1-q))^(1/(1-q)) (r^(2n) + sum_i beta_i r^(2i) + L)^(-1/(1-q))

where the n-1 interior coefficients obey the fixed point
beta_i = F_i(beta) = c_i * int |y|^(2n-2i) rho_{beta,L}. The system is solved by
minimizing I(beta) = sum_i (beta_i - F_i)^2 in log-coordinates, followed by a
Newton polish on beta - F(beta) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DIVERGENT, ParameterError, ProblemParams, alpha_from_q, q_from_alpha
from .numerics import (BracketError, QuasiNewtonConfig, RootConfig, find_root_bracketed,
                       minimize_quasi_newton)
from .quadrature import DEFAULT_RULE, QuadratureRule, integrate_semi_infinite
from .specfun import even_coefficients, sphere_area

RESIDUAL_TOL = 1e-14
FIXED_POINT_RTOL = 1e-7


class NonMonotoneError(ArithmeticError):
    """A pre-scan found the mass not monotone in q; the crossing is ambiguous."""


@dataclass
class BetaState:
    N: int
    n: int
    q: float
    L: float
    beta: np.ndarray
    residual: float
    converged: bool
    message: str = ""

    @property
    def lam(self) -> float:
        return 2.0 * self.n


@dataclass(frozen=True)
class MassCurvePoint:
    alpha: float
    q: float
    m0: float
    residual: float
    converged: bool = True


@dataclass
class MonotonicityReport:
    L: list[float]
    masses: list[float]
    converged: list[bool]
    monotone: bool
    failures: list[str] = field(default_factory=list)


def _validate(N: int, n: int, q: float, L: float):
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    ProblemParams(N, 2.0 * n, q)
    lo = moment_q_min(N, n)
    if not lo < q < N / (N + 2):
        raise ParameterError(f"q={q} outside ({lo:.6g}, {N / (N + 2):.6g}) for N={N}, lambda={2 * n}")
    if L < 0:
        raise ParameterError(f"L must be >= 0, got {L}")


def moment_q_min(N: int, n: int) -> float:
    """Below this q the moments used by the fixed point diverge at infinity.

    It lies below N/(N+2n) for n >= 2, so formal solutions just under the
    boundedness threshold (as in the quartic case) can still be computed.
    """
    return max(0.0, (N - 2) / (N + 2 * n - 2))


def _amp(q: float) -> float:
    return (q / (1 - q)) ** (1 / (1 - q))


def _log_poly(r, n, beta, L):
    """log(r^(2n) + sum_i beta_i r^(2i) + L), stable for very small and large r."""
    lr = np.log(r)
    terms = [2 * n * lr]
    for i, b in enumerate(beta, start=1):
        terms.append(2 * i * lr + math.log(b))
    if L > 0:
        terms.append(np.full_like(lr, math.log(L)))
    return np.logaddexp.reduce(np.array(terms), axis=0)


def _scale(n, beta, L):
    cands = [1e-300] + [b ** (1 / (2 * n - 2 * i)) for i, b in enumerate(beta, start=1)]
    if L > 0:
        cands.append(L ** (1 / (2 * n)))
    s = max(cands)
    return s if s > 1e-300 else 1.0


def _moments(N, n, q, L, beta, powers, extra=0.0, rule=DEFAULT_RULE):
    """|S^{N-1}| int r^(k+N-1) V^(-1/(1-q)-extra) dr for each k, V the profile polynomial."""
    p = 1 / (1 - q) + extra
    ks = np.asarray(powers, dtype=float)[:, None]

    def integrand(r):
        return np.exp((ks + N - 1) * np.log(r) - p * _log_poly(r, n, beta, L))

    res = integrate_semi_infinite(integrand, rule, scale=_scale(n, beta, L))
    return sphere_area(N) * np.atleast_1d(res.value)


def density_even(state: BetaState, r):
    """(q/(1-q))^(1/(1-q)) (r^(2n) + sum beta_i r^(2i) + L)^(-1/(1-q)); +inf at r = 0 when L = 0."""
    r = np.asarray(r, dtype=float)
    p = 1 / (1 - state.q)
    with np.errstate(divide="ignore"):
        V = r ** (2 * state.n) + state.L
        for i, b in enumerate(state.beta, start=1):
            V = V + b * r ** (2 * i)
        out = _amp(state.q) * V ** (-p)
    return float(out) if out.ndim == 0 else out


def fixed_point_map(N: int, n: int, q: float, L: float, beta, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """F_i(beta) = c_i int |y|^(2n-2i) rho_{beta,L}, i = 1..n-1."""
    beta = np.asarray(beta, dtype=float)
    _validate(N, n, q, L)
    if n == 1:
        return np.zeros(0)
    if np.any(beta <= 0) and L == 0:
        raise ParameterError("beta must be positive when L = 0")
    c = even_coefficients(N, n)
    powers = [2 * n - 2 * i for i in range(1, n)]
    return c * _amp(q) * _moments(N, n, q, L, beta, powers, rule=rule)


def jacobian_fixed_point(N: int, n: int, q: float, L: float, beta,
                         rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """dF_i/dbeta_j = -(c_i/q) int |y|^(2n-2i+2j) rho^(2-q); all entries negative."""
    beta = np.asarray(beta, dtype=float)
    _validate(N, n, q, L)
    if n == 1:
        return np.zeros((0, 0))
    c = even_coefficients(N, n)
    # the entry depends on (i, j) only through the moment order 2n - 2i + 2j
    orders = sorted({2 * n - 2 * i + 2 * j for i in range(1, n) for j in range(1, n)})
    vals = dict(zip(orders, _moments(N, n, q, L, beta, orders, extra=1.0, rule=rule)))
    pref = _amp(q) / (1 - q)
    J = np.empty((n - 1, n - 1))
    for i in range(1, n):
        for j in range(1, n):
            J[i - 1, j - 1] = -c[i - 1] * pref * vals[2 * n - 2 * i + 2 * j]
    return J


def residual_I(N: int, n: int, q: float, L: float, beta, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """I(beta) = sum_i (beta_i - F_i(beta))^2."""
    beta = np.asarray(beta, dtype=float)
    d = beta - fixed_point_map(N, n, q, L, beta, rule)
    return float(d @ d)


def _seed(N, n, q, L, rule):
    """beta_i = binom(n, i) s^(2n-2i), with s fixing the first equation."""
    binom = np.array([math.comb(n, i) for i in range(1, n)], dtype=float)
    powers = np.array([2 * n - 2 * i for i in range(1, n)], dtype=float)

    def h(t):
        beta = binom * np.exp(powers * t)
        return math.log(beta[0]) - math.log(fixed_point_map(N, n, q, L, beta, rule)[0])

    lo, hi = -1.0, 1.0
    while h(lo) > 0:
        lo -= 2.0
        if lo < -60:
            raise BracketError("could not seed beta")
    while h(hi) < 0:
        hi += 2.0
        if hi > 60:
            raise BracketError("could not seed beta")
    t = find_root_bracketed(h, lo, hi, RootConfig(abs_tol=1e-6))
    return binom * np.exp(powers * t)


def _accept(beta, F):
    return bool(np.all(np.abs(beta - F) < FIXED_POINT_RTOL * np.maximum(1.0, np.abs(beta))))


def _newton_polish(N, n, q, L, beta, rule, iters=30):
    for _ in range(iters):
        F = fixed_point_map(N, n, q, L, beta, rule)
        d = beta - F
        if np.all(np.abs(d) <= 1e-14 * np.maximum(1.0, beta)):
            break
        J = jacobian_fixed_point(N, n, q, L, beta, rule)
        step = np.linalg.solve(np.eye(n - 1) - J, -d)
        t = 1.0
        while np.any(beta + t * step <= 0):
            t *= 0.5
            if t < 1e-8:
                return beta
        beta = beta + t * step
    return beta


def _attempt(N, n, q, L, beta0, rule, cfg):
    def obj(u):
        if np.any(np.abs(u) > 700):
            return math.inf
        b = np.exp(u)
        d = b - fixed_point_map(N, n, q, L, b, rule)
        return float(d @ d)

    def grad(u):
        b = np.exp(u)
        d = b - fixed_point_map(N, n, q, L, b, rule)
        J = jacobian_fixed_point(N, n, q, L, b, rule)
        return b * (2.0 * (d - J.T @ d))

    res = minimize_quasi_newton(obj, np.log(beta0), grad, cfg)
    beta = _newton_polish(N, n, q, L, np.exp(res.x), rule)
    F = fixed_point_map(N, n, q, L, beta, rule)
    I = float((beta - F) @ (beta - F))
    ok = I < RESIDUAL_TOL and _accept(beta, F)
    return beta, I, ok, res.message


def solve_betas(N: int, n: int, q: float, L: float = 0.0, init=None,
                rule: QuadratureRule = DEFAULT_RULE,
                cfg: QuasiNewtonConfig = QuasiNewtonConfig(grad_tol=1e-12, max_iter=200, max_step=1.0)) -> BetaState:
    """Solve beta = F(beta) for lambda = 2n at multiplier L.

    ``init`` warm-starts the search (e.g. from a neighboring q or L). When it
    is missing or fails, a scaling seed and then a small multi-start are tried.
    """
    _validate(N, n, q, L)
    if n == 1:
        return BetaState(N, n, q, L, np.zeros(0), 0.0, True, "no unknowns")
    starts = []
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (n - 1,) or np.any(init <= 0):
            raise ParameterError(f"init must be {n - 1} positive numbers")
        starts.append(init)
    seed = _seed(N, n, q, L, rule)
    starts.append(seed)
    starts += [seed * f for f in (0.1, 10.0)]
    best = None
    for b0 in starts:
        try:
            beta, I, ok, msg = _attempt(N, n, q, L, b0, rule, cfg)
        except (ArithmeticError, ValueError) as exc:
            best = best or (b0, math.inf, False, str(exc))
            continue
        if ok:
            return BetaState(N, n, q, L, beta, I, True, msg)
        if best is None or I < best[1]:
            best = (beta, I, ok, msg)
    beta, I, _, msg = best
    return BetaState(N, n, q, L, beta, I, False, f"not converged: {msg}")


def mass_even(state: BetaState, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """int rho_{beta,L}; DIVERGENT at L = 0 when q >= (N-2)/N."""
    N, q = state.N, state.q
    if state.L == 0 and q >= (N - 2) / N:
        return DIVERGENT
    return _amp(q) * float(_moments(N, state.n, q, state.L, state.beta, [0], rule=rule)[0])


def mass_curve(N: int, n: int, alpha_grid, rule: QuadratureRule = DEFAULT_RULE) -> list[MassCurvePoint]:
    """m(0) along a grid of alpha values, warm-starting each solve from the last."""
    out = []
    beta = None
    for a in sorted(float(x) for x in alpha_grid):
        q = q_from_alpha(N, 2 * n, a)
        try:
            st = solve_betas(N, n, q, 0.0, init=beta, rule=rule)
            m = mass_even(st, rule)
            out.append(MassCurvePoint(a, q, float(m), st.residual, st.converged))
            if st.converged:
                beta = st.beta
        except (ArithmeticError, ValueError):
            out.append(MassCurvePoint(a, q, math.nan, math.inf, False))
    return out


def monotonicity_scan(N: int, n: int, q: float, L_grid, rule: QuadratureRule = DEFAULT_RULE) -> MonotonicityReport:
    """Masses m(L) along a sorted L grid, with a strict-decrease flag."""
    L_grid = [float(x) for x in L_grid]
    if any(b < a for a, b in zip(L_grid, L_grid[1:])) or any(x < 0 for x in L_grid):
        raise ParameterError("L grid must be sorted and non-negative")
    masses, conv, fails = [], [], []
    beta = None
    for L in L_grid:
        try:
            st = solve_betas(N, n, q, L, init=beta, rule=rule)
            masses.append(float(mass_even(st, rule)))
            conv.append(st.converged)
            if st.converged:
                beta = st.beta
            else:
                fails.append(f"L={L}: {st.message}")
        except (ArithmeticError, ValueError) as exc:
            masses.append(math.nan)
            conv.append(False)
            fails.append(f"L={L}: {exc}")
    monotone = all(conv) and all(b < a for a, b in zip(masses, masses[1:]))
    return MonotonicityReport(L_grid, masses, conv, monotone, fails)


def critical_window(N: int, lam: float, eps: float = 1e-4) -> tuple[float, float]:
    """Search window for the critical exponent: (N/(N+lam)+eps, min(N/(N+2), (N-2)/N)-eps)."""
    return N / (N + lam) + eps, min(N / (N + 2), (N - 2) / N) - eps


def bracket_crossing(g, lo: float, hi: float, npre: int = 8):
    """Pre-scan g on npre points of [lo, hi]; return a bracket of the sign change or None.

    g must be non-decreasing; a violation raises NonMonotoneError. Once g is
    positive, later points where the solve fails count as +inf: near the top
    of the window the mass blows up and the positive branch of solutions ends.
    """
    qs = np.linspace(lo, hi, npre)
    vals = []
    for x in qs:
        try:
            vals.append(g(float(x)))
        except ArithmeticError:
            if not (vals and vals[-1] > 0):
                raise
            vals.append(math.inf)
    if any(math.isnan(v) for v in vals):
        raise ArithmeticError("pre-scan produced unusable points")
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise NonMonotoneError(f"mass not monotone over the pre-scan: {vals}")
    for (a, va), (b, vb) in zip(zip(qs, vals), zip(qs[1:], vals[1:])):
        if va < 0 <= vb:
            return float(a), float(b)
    return None


def critical_q_even(N: int, n: int, tol: float = 1e-4, rule: QuadratureRule = DEFAULT_RULE,
                    eps: float = 1e-4):
    """Critical exponent below which m(0) < 1 (concentration), or None.

    Returns (q_crit, alpha_crit).
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if n < 2:
        raise ParameterError("the critical exponent needs lambda >= 4")
    lam = 2 * n
    lo, hi = critical_window(N, lam, eps)
    if not lo < hi:
        return None
    warm: dict[float, np.ndarray] = {}

    def g(q):
        init = None
        if warm:
            init = warm[min(warm, key=lambda x: abs(x - q))]
        st = solve_betas(N, n, q, 0.0, init=init, rule=rule)
        if not st.converged:
            raise ArithmeticError(f"fixed point not converged at q={q}: {st.message}")
        warm[q] = st.beta
        return float(mass_even(st, rule)) - 1.0

    br = bracket_crossing(g, lo, hi)
    if br is None:
        return None
    qc = find_root_bracketed(g, br[0], br[1], RootConfig(abs_tol=tol))
    return qc, alpha_from_q(ProblemParams(N, lam, qc))
