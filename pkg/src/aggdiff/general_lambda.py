"""Stationary states at L = 0 for a general interaction exponent lambda.

The density is written as

    rho_f(r) = (r^2 (1+r)^(lambda-2) f(r))^(-1/(1-q)),   f(r) = |P(r/(1+r))|^2,

which builds in the power laws at the origin and at infinity, with P a complex
polynomial. The Euler-Lagrange equation with the atom M = 1 - mass reads
f = Phi(f), where

    Phi(f)(r) = (1-q)/q * ( |S| int C(r,s) f(s)^(-1/(1-q)) ds
                            + (1 - |S| int w(s) f(s)^(-1/(1-q)) ds) (r/(1+r))^(lambda-2) )

with w(s) = s^(N-1-2/(1-q)) (1+s)^(-(lambda-2)/(1-q)) and
C(r,s) = (K(r,s) - s^lambda) r^-2 (1+r)^(2-lambda) w(s). On a fixed set of nodes
Phi is affine in g = f^(-1/(1-q)), so the squared residual has a cheap exact
gradient by the chain rule. P is stored in a shifted Chebyshev basis during
the optimization and reported with monomial coefficients in u = r/(1+r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as Pm

from .core import (ParameterError, ProblemParams, Regime, alpha_from_q, classify_regime,
                   q_from_alpha)
from .even_lambda import bracket_crossing, critical_window, solve_betas
from .numerics import (QuasiNewtonConfig, RootConfig, find_root_bracketed, fd_gradient,
                       minimize_quasi_newton)
from .quadrature import (DEFAULT_RULE, REFERENCE_GRID, QuadMode, QuadratureRule, discretize,
                         integrate_semi_infinite)
from .specfun import kernel_excess, sphere_area

L1_THRESHOLD = 1e-4


@dataclass(frozen=True)
class PolyAnsatz:
    """P(u) = sum_k coeffs[k] u^k on u in [0, 1]."""

    coeffs: tuple

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        if c.size == 0 or not np.any(c != 0):
            raise ParameterError("P must not be identically zero")
        object.__setattr__(self, "coeffs", tuple(complex(x) for x in c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=complex)

    def P(self, u):
        return Pm.polyval(np.asarray(u, dtype=float), self.array)

    def f_of_u(self, u):
        return np.abs(self.P(u)) ** 2

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return self.f_of_u(r / (1.0 + r))

    def rotated(self, phase: float) -> "PolyAnsatz":
        return PolyAnsatz(self.array * np.exp(1j * phase))

    def padded(self, degree: int) -> "PolyAnsatz":
        c = self.array
        if degree < c.size - 1:
            raise ParameterError("cannot lower the degree by padding")
        return PolyAnsatz(np.concatenate([c, np.zeros(degree + 1 - c.size)]))

    def as_dict(self) -> dict:
        return {"degree": self.degree, "re": [c.real for c in self.coeffs], "im": [c.imag for c in self.coeffs]}


@dataclass
class GeneralSolution:
    params: ProblemParams
    ansatz: PolyAnsatz
    grid: QuadratureRule
    l2_residual: float
    l1_error: float
    mass: float
    converged: bool
    mass_grid: float = math.nan
    nit: int = 0
    message: str = ""
    history: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        p = self.params
        return {
            "N": p.N, "lambda": p.lam, "q": p.q, "alpha": alpha_from_q(p),
            "mass": self.mass, "mass_grid": self.mass_grid, "atom": max(0.0, 1.0 - self.mass),
            "l2_residual": self.l2_residual, "l1_error": self.l1_error,
            "converged": self.converged, "iterations": self.nit, "message": self.message,
            "ansatz": self.ansatz.as_dict(), "grid": self.grid.as_dict(),
        }


def _exponent(p: ProblemParams) -> float:
    return 1.0 / (1.0 - p.q)


def weight(p: ProblemParams, s):
    """w(s) = s^(N-1-2/(1-q)) (1+s)^(-(lambda-2)/(1-q))."""
    s = np.asarray(s, dtype=float)
    e = _exponent(p)
    return np.exp((p.N - 1 - 2 * e) * np.log(s) - (p.lam - 2) * e * np.log1p(s))


def _edge(p: ProblemParams, r):
    """(r/(1+r))^(lambda-2)."""
    r = np.asarray(r, dtype=float)
    return np.exp((p.lam - 2) * (np.log(r) - np.log1p(r)))


def density_from_f(p: ProblemParams, ansatz: PolyAnsatz, r):
    """rho_f(r) = (r^2 (1+r)^(lambda-2) f(r))^(1/(q-1))."""
    r = np.asarray(r, dtype=float)
    f = ansatz.f(r)
    if np.any(f <= 0):
        raise ParameterError("P vanishes on [0, 1]: density undefined")
    out = np.exp(-_exponent(p) * (2 * np.log(r) + (p.lam - 2) * np.log1p(r) + np.log(f)))
    return float(out) if out.ndim == 0 else out


def c_kernel(p: ProblemParams, r, s):
    """C(r,s) = (K(r,s) - s^lambda) r^-2 (1+r)^(2-lambda) w(s)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    E = kernel_excess(p.N, p.lam, r, s)
    out = E * np.exp(-2 * np.log(r) + (2 - p.lam) * np.log1p(r)) * weight(p, s)
    return float(out) if np.ndim(out) == 0 else out


def nodes(rule: QuadratureRule, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on which Phi and the residuals are discretized."""
    return discretize(rule, scale=scale)


@lru_cache(maxsize=16)
def _excess_matrix(N: int, lam: float, rule: QuadratureRule, scale: float):
    s, W = nodes(rule, scale)
    E = kernel_excess(N, lam, s[:, None], s[None, :])
    return s, W, E


class _Operator:
    """Phi restricted to the nodes: Phi = M g + c0 e."""

    def __init__(self, p: ProblemParams, rule: QuadratureRule, scale: float = 1.0):
        self.p = p
        s, W, E = _excess_matrix(p.N, float(p.lam), rule, float(scale))
        S = sphere_area(p.N)
        self.s, self.W = s, W
        self.u = s / (1.0 + s)
        self.w = weight(p, s)
        self.c0 = (1 - p.q) / p.q
        self.e = _edge(p, s)
        a = S * self.w * W
        self.a = a
        self.M = self.c0 * _combined_kernel(p, s, E) * a[None, :]
        self.cw = W * self.w

    def phi(self, g):
        return self.M @ g + self.c0 * self.e

    def mass(self, g):
        return float(self.a @ g)


def _combined_kernel(p: ProblemParams, r, E):
    """E(r,s) r^-2 (1+r)^(2-lambda) - (r/(1+r))^(lambda-2), the kernel of Phi acting on g.

    Dividing by r*r (rather than multiplying by exp(-2 log r)) keeps the
    lambda = 2 case, where both terms equal 1, exactly zero.
    """
    r = np.asarray(r, dtype=float)[:, None]
    return E / (r * r) * (1.0 + r) ** (2.0 - p.lam) - _edge(p, r)


def _operator(p, rule, scale=1.0):
    return _Operator(p, rule, scale)


def phi_map(p: ProblemParams, ansatz: PolyAnsatz, r_grid=None, quad: QuadratureRule = REFERENCE_GRID):
    """Phi(f) at ``r_grid`` (default: the quadrature nodes of ``quad``)."""
    s, W = nodes(quad)
    e = _exponent(p)
    fs = ansatz.f(s)
    if np.any(fs <= 0):
        raise ParameterError("P vanishes on [0, 1]")
    g = fs ** (-e)
    c0 = (1 - p.q) / p.q
    a = sphere_area(p.N) * weight(p, s) * W
    r = s if r_grid is None else np.asarray(r_grid, dtype=float)
    E = kernel_excess(p.N, p.lam, r[:, None], s[None, :])
    return c0 * (_combined_kernel(p, r, E) @ (a * g) + _edge(p, r))


def _residuals(op: _Operator, f):
    e = _exponent(op.p)
    g = f ** (-e)
    phi = op.phi(g)
    if np.any(phi <= 0):
        return g, phi, None
    return g, phi, g - phi ** (-e)


def residual_l2(p: ProblemParams, ansatz: PolyAnsatz, quad: QuadratureRule = REFERENCE_GRID) -> float:
    """int w(s) (f^(-1/(1-q)) - Phi(f)^(-1/(1-q)))^2 ds on the nodes of ``quad``."""
    op = _operator(p, quad)
    f = ansatz.f_of_u(op.u)
    if np.any(f <= 0):
        raise ParameterError("P vanishes on [0, 1]")
    _, _, d = _residuals(op, f)
    if d is None:
        raise ArithmeticError("Phi(f) is not positive on the grid")
    return float(op.cw @ (d * d))


def l1_error(p: ProblemParams, ansatz: PolyAnsatz, quad: QuadratureRule = REFERENCE_GRID) -> float:
    """||rho_f - rho_Phi(f)||_L1 = |S| int w |f^(-1/(1-q)) - Phi(f)^(-1/(1-q))| ds."""
    op = _operator(p, quad)
    f = ansatz.f_of_u(op.u)
    if np.any(f <= 0):
        raise ParameterError("P vanishes on [0, 1]")
    _, _, d = _residuals(op, f)
    if d is None:
        raise ArithmeticError("Phi(f) is not positive on the grid")
    return float(sphere_area(p.N) * (op.cw @ np.abs(d)))


def weight_mass(p: ProblemParams, quad: QuadratureRule = REFERENCE_GRID) -> float:
    s, W = nodes(quad)
    return float(W @ weight(p, s))


class _Objective:
    """Residual as a function of the real parameter vector theta.

    theta holds Re and Im of the Chebyshev coefficients of P on [0, 1], minus
    Im of the top one (phase gauge). f is normalized so that f(1) = (1-q)/q,
    the exact large-r limit, which removes the scale of P as well.
    """

    def __init__(self, op: _Operator, degree: int):
        self.op = op
        self.d = degree
        self.T = C.chebvander(2 * op.u - 1, degree)

    def unpack(self, theta):
        d = self.d
        re = theta[: d + 1]
        im = np.concatenate([theta[d + 1:], [0.0]])
        return re + 1j * im

    def pack(self, cheb):
        cheb = np.asarray(cheb, dtype=complex)
        top = cheb[-1]
        if abs(top) > 0:
            cheb = cheb * (abs(top) / top)
        return np.concatenate([cheb.real, cheb.imag[:-1]])

    def f(self, theta):
        c = self.unpack(theta)
        P = self.T @ c
        P1 = c.sum()  # T_k(1) = 1
        n1 = abs(P1) ** 2
        return self.op.c0 * np.abs(P) ** 2 / n1, P, P1, n1

    def value(self, theta):
        if not np.all(np.isfinite(theta)):
            return math.inf
        f, _, _, n1 = self.f(theta)
        if n1 == 0 or not np.all(f > 0):
            return math.inf
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            _, _, d = _residuals(self.op, f)
        if d is None or not np.all(np.isfinite(d)):
            return math.inf
        return float(self.op.cw @ (d * d))

    def grad(self, theta):
        op, e = self.op, _exponent(self.op.p)
        f, P, P1, n1 = self.f(theta)
        g = f ** (-e)
        phi = op.phi(g)
        d = g - phi ** (-e)
        v = 2 * op.cw * d
        dR_dg = v + op.M.T @ (v * e * phi ** (-e - 1))
        G = dR_dg * (-e) * g / f  # dR/df
        gq = op.c0 / n1
        tot = float(G @ f) / n1  # coefficient of dn1
        dre = gq * (self.T.T @ (G * 2 * P.real)) - tot * 2 * P1.real
        dim = gq * (self.T.T @ (G * 2 * P.imag)) - tot * 2 * P1.imag
        return np.concatenate([dre, dim[:-1]])


def _to_cheb(ansatz: PolyAnsatz, degree: int) -> np.ndarray:
    """Monomial coefficients in u to Chebyshev coefficients in x = 2u - 1."""
    mono = ansatz.padded(degree).array
    out = np.zeros(degree + 1, dtype=complex)
    power = np.array([1.0])  # ((x + 1)/2)^k
    for k in range(degree + 1):
        out[: power.size] += mono[k] * power
        power = Pm.polymul(power, [0.5, 0.5])
    return _pad(C.poly2cheb(out.real), degree) + 1j * _pad(C.poly2cheb(out.imag), degree)


def _pad(c, degree):
    return np.concatenate([c, np.zeros(degree + 1 - len(c))])


def _from_cheb(cheb: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients in x = 2u - 1 to monomial coefficients in u."""
    d = len(cheb) - 1
    mono_x = _pad(C.cheb2poly(cheb.real), d) + 1j * _pad(C.cheb2poly(cheb.imag), d)
    out = np.zeros(len(cheb), dtype=complex)
    lin = np.array([-1.0, 2.0])  # x = 2u - 1
    power = np.array([1.0])
    for k, a in enumerate(mono_x):
        out[: power.size] += a * power
        power = Pm.polymul(power, lin)
    return out


def factor_positive(coeffs) -> PolyAnsatz:
    """Write a polynomial positive on the real line as |P|^2.

    One root of each complex-conjugate pair goes into P. Falls back to a
    least-squares fit of sqrt(Q) on [0, 1] if the roots do not pair up.
    """
    Q = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    deg = Q.size - 1
    lead = Q[-1]
    if deg % 2 or lead <= 0:
        raise ParameterError("need an even-degree polynomial with positive leading coefficient")
    if deg == 0:
        return PolyAnsatz([math.sqrt(lead)])
    roots = np.roots(Q[::-1])
    upper = roots[roots.imag > 1e-12]
    if upper.size == deg // 2:
        P = math.sqrt(lead) * np.poly(upper)[::-1]
        return PolyAnsatz(P)
    u = np.linspace(0, 1, 4 * deg + 4)
    V = np.vander(u, deg // 2 + 1, increasing=True)
    c, *_ = np.linalg.lstsq(V, np.sqrt(Pm.polyval(u, Q)), rcond=None)
    return PolyAnsatz(c)


def even_seed(N: int, n: int, q: float) -> PolyAnsatz | None:
    """Exact ansatz for lambda = 2n from the beta fixed point, or None if the solve fails."""
    try:
        st = solve_betas(N, n, q, 0.0)
    except (ArithmeticError, ValueError):
        return None
    if not st.converged:
        return None
    beta = np.concatenate([st.beta, [1.0]])
    Q = np.zeros(2 * n - 1)
    for i, b in enumerate(beta, start=1):
        term = Pm.polymul(Pm.polypow([0, 1], 2 * i - 2), Pm.polypow([1, -1], 2 * n - 2 * i))
        Q[: term.size] += b * term
    c0 = (1 - q) / q
    return PolyAnsatz(math.sqrt(c0) * factor_positive(Q).array)


def quartic_ansatz(q: float, B: float) -> PolyAnsatz:
    """Degree-1 ansatz of the lambda = 4 profile: sqrt((1-q)/q) (u + i sqrt(B) (1-u))."""
    c = math.sqrt((1 - q) / q)
    return PolyAnsatz([1j * c * math.sqrt(B), c * (1 - 1j * math.sqrt(B))])


def default_seed(p: ProblemParams) -> PolyAnsatz:
    """Seed from the nearest even exponent at the same alpha, else a quadratic profile."""
    alpha = alpha_from_q(p)
    for lam_e in sorted({max(4, 2 * math.floor(p.lam / 2)), max(4, 2 * math.ceil(p.lam / 2))},
                        key=lambda x: abs(x - p.lam)):
        try:
            qe = q_from_alpha(p.N, lam_e, alpha)
            seed = even_seed(p.N, lam_e // 2, qe)
        except (ArithmeticError, ValueError):
            seed = None
        if seed is not None:
            return seed
    return quartic_ansatz(p.q, 1.0)


def _normalized(p: ProblemParams, ansatz: PolyAnsatz) -> PolyAnsatz:
    """Scale P so that f(1) = (1-q)/q and rotate so the top coefficient is real, >= 0."""
    c = ansatz.array
    P1 = c.sum()
    c = c * math.sqrt((1 - p.q) / p.q) / abs(P1)
    top = c[np.flatnonzero(np.abs(c) > 0)[-1]]
    return PolyAnsatz(c * abs(top) / top)


def mass_general(sol_or_params, ansatz: PolyAnsatz | None = None, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """|S| int w(s) f(s)^(-1/(1-q)) ds, the mass of rho_f."""
    if isinstance(sol_or_params, GeneralSolution):
        p, ansatz = sol_or_params.params, sol_or_params.ansatz
    else:
        p = sol_or_params
    e = _exponent(p)
    if rule.mode is QuadMode.UNIFORM_RIEMANN:
        s, W = nodes(rule)
        return float(sphere_area(p.N) * (W @ (weight(p, s) * ansatz.f(s) ** (-e))))
    res = integrate_semi_infinite(lambda s: weight(p, s) * ansatz.f(s) ** (-e), rule)
    return float(sphere_area(p.N) * res.value)


def solve_general(p: ProblemParams, degree: int = 10, grid: QuadratureRule = REFERENCE_GRID,
                  init: PolyAnsatz | None = None, allow_formal: bool = False,
                  gradient: str = "analytic",
                  cfg: QuasiNewtonConfig = QuasiNewtonConfig(grad_tol=1e-16, step_tol=1e-15, max_iter=3000),
                  l1_threshold: float = L1_THRESHOLD) -> GeneralSolution:
    """Minimize the squared residual of f = Phi(f) over P of the given degree.

    ``gradient`` is "analytic" (chain rule through the affine Phi) or "fd"
    (central differences with step 1e-6 max(1, |theta_i|)).
    """
    regime = classify_regime(p)
    if regime is Regime.UNBOUNDED_BELOW or (regime is Regime.QUARTIC_FORMAL and not allow_formal):
        raise ParameterError(f"parameters are in regime {regime.value}")
    if degree < 0:
        raise ParameterError("degree must be >= 0")
    if init is None:
        init = default_seed(p) if degree > 0 else PolyAnsatz([1.0])
    if init.degree > degree:
        raise ParameterError(f"initial ansatz has degree {init.degree} > {degree}")
    op = _operator(p, grid)
    obj = _Objective(op, degree)
    theta0 = obj.pack(_to_cheb(_normalized(p, init), degree))
    if degree == 0:
        # f is pinned to (1-q)/q by the normalization: nothing to optimize
        theta, nit, msg, hist = theta0, 0, "no free parameters", [obj.value(theta0)]
    else:
        if gradient == "analytic":
            grad = obj.grad
        elif gradient == "fd":
            def grad(t):
                return fd_gradient(obj.value, t, 1e-6)
        else:
            raise ParameterError(f"unknown gradient mode {gradient!r}")
        res = minimize_quasi_newton(obj.value, theta0, grad, cfg)
        theta, nit, msg, hist = res.x, res.nit, res.message, res.history
    ansatz = _normalized(p, PolyAnsatz(_from_cheb(obj.unpack(theta))))
    r2 = residual_l2(p, ansatz, grid)
    l1 = l1_error(p, ansatz, grid)
    try:
        m_grid = mass_general(p, ansatz, grid)
        m = mass_general(p, ansatz, DEFAULT_RULE)
    except ArithmeticError:
        # divergent mass (e.g. lambda = 2, where rho_f is a pure power near 0 or infinity)
        m_grid = m = math.inf
    return GeneralSolution(p, ansatz, grid, r2, l1, m, l1 <= l1_threshold, m_grid, nit, msg, hist)


def critical_q_general(N: int, lam: float, tol: float = 1e-4, degree: int = 10,
                       grid: QuadratureRule = REFERENCE_GRID, eps: float = 1e-4,
                       init: PolyAnsatz | None = None, details: bool = False):
    """q below which the L = 0 solution has mass < 1, or None.

    Returns (q_crit, alpha_crit); with ``details`` also the solution at q_crit
    so that a sweep in lambda can warm-start from it.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    lo, hi = critical_window(N, lam, eps)
    if not lo < hi:
        return (None, None) if details else None
    warm: dict[float, PolyAnsatz] = {}
    sols: dict[float, GeneralSolution] = {}

    def g(q):
        start = warm[min(warm, key=lambda x: abs(x - q))] if warm else init
        sol = solve_general(ProblemParams(N, lam, q), degree, grid, init=start)
        if not sol.converged:
            raise ArithmeticError(f"general solve not converged at q={q} (l1 error {sol.l1_error:.3g})")
        warm[q] = sol.ansatz
        sols[q] = sol
        return sol.mass - 1.0

    br = bracket_crossing(g, lo, hi)
    if br is None:
        return (None, None) if details else None
    qc = find_root_bracketed(g, br[0], br[1], RootConfig(abs_tol=tol))
    out = (qc, alpha_from_q(ProblemParams(N, lam, qc)))
    return (out, sols.get(qc)) if details else out


def _kernel_remainder(N: int, lam: float, r, s):
    """K(r,s) - r^lambda - s^lambda, computed from the smaller radius."""
    lo, hi = np.minimum(r, s), np.maximum(r, s)
    return kernel_excess(N, lam, lo, hi) - lo**lam


def free_energy_radial(p: ProblemParams, density, M: float, quad: QuadratureRule = DEFAULT_RULE,
                       scale: float = 1.0) -> float:
    """-(1/(1-q)) int rho^q + M int |x|^lambda rho + 1/2 int int rho |x-y|^lambda rho.

    The double integral is |S|^2/2 int int r^(N-1) s^(N-1) rho(r) K(r,s) rho(s).
    Splitting K = r^lambda + s^lambda + remainder turns the growing part into
    m * int |x|^lambda rho; the remainder grows more slowly and is integrated
    with a graded tensor-product rule. One-dimensional moments use the
    adaptive rule with tail corrections (Gauss mode) or the regular grid.
    """
    if not 0 <= M <= 1:
        raise ParameterError(f"atom mass must lie in [0, 1], got {M}")
    N, lam, q = p.N, p.lam, p.q
    S = sphere_area(N)

    def moments(r):
        rho = np.asarray(density(r), dtype=float)
        base = r ** (N - 1)
        return np.vstack([base * rho, base * r**lam * rho, base * rho**q])

    if quad.mode is QuadMode.UNIFORM_RIEMANN:
        r, W = nodes(quad)
        m0, mlam, mq = S * (moments(r) @ W)
    else:
        m0, mlam, mq = S * np.asarray(integrate_semi_infinite(moments, quad, scale=scale).value)
    if not np.all(np.isfinite([m0, mlam, mq])):
        raise ArithmeticError("divergent integral in the free energy")
    r, W = nodes(quad, scale)
    rho = np.asarray(density(r), dtype=float)
    if not np.all(np.isfinite(rho)):
        raise ArithmeticError("density is not finite on the nodes")
    mu = S * W * r ** (N - 1) * rho
    D = _kernel_remainder(N, lam, r[:, None], r[None, :])
    inter = m0 * mlam + 0.5 * float(mu @ D @ mu)
    return -mq / (1 - q) + M * mlam + inter
