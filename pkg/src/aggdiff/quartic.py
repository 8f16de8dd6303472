"""Exact treatment of the quartic interaction lambda = 4.

With lambda = 4 the convolution with |x|^4 is a polynomial in |x|^2, so every
stationary profile has the form

    rho_{B,L}(r) = (q/(1-q))^(1/(1-q)) (r^4 + B r^2 + L)^(-1/(1-q))

with B tied to the second moment by B = kappa * int |y|^2 rho, kappa = 2 + 4/N.
For each L >= 0 that fixed point is unique; the mass m(L) decreases in L and
the minimizer either has m(L*) = 1 (no atom) or, when m(0) < 1, L* = 0 and an
atom of mass 1 - m(0) sits at the origin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DIVERGENT, ParameterError, ProblemParams, Regime, classify_regime
from .numerics import RootConfig, find_root_bracketed
from .quadrature import DEFAULT_RULE, QuadratureRule, integrate_semi_infinite
from .specfun import log_beta, sphere_area


class Branch(str, enum.Enum):
    INTERIOR = "Interior"
    CONCENTRATED = "Concentrated"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class QuarticSolution:
    N: int
    q: float
    L: float
    B: float
    mass: float
    atom: float
    branch: Branch
    regime: Regime
    formal: bool = False

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "q": self.q,
            "regime": self.regime.value,
            "branch": self.branch.value,
            "L": self.L,
            "B": self.B,
            "mass": self.mass,
            "atom": self.atom,
            "q_crit4": critical_q4(self.N),
            "formal": self.formal,
        }


def kappa(N: int) -> float:
    return 2.0 + 4.0 / N


def critical_q4(N: int) -> float:
    """Critical exponent at lambda = 4: ((N-2)/(N+2)) (1 + 4/(3N))."""
    return (N - 2) / (N + 2) * (1 + 4 / (3 * N))


def _check_range(N: int, q: float):
    lo = max(0.0, (N - 2) / (N + 2))
    if not lo < q < N / (N + 2):
        raise ParameterError(f"q={q} outside ({lo:.6g}, {N / (N + 2):.6g}) for N={N}")


def _amp(q: float) -> float:
    return (q / (1 - q)) ** (1 / (1 - q))


def _scale(B: float, L: float) -> float:
    """Radius where r^4 balances B r^2 + L."""
    return math.sqrt(0.5 * (B + math.sqrt(B * B + 4 * L))) if B > 0 or L > 0 else 1.0


def _radial(N, q, L, B, powers, extra=0.0, rule=DEFAULT_RULE):
    """|S^{N-1}| int r^(k+N-1) (r^4+Br^2+L)^(-1/(1-q)-extra) dr for each k in ``powers``."""
    p = 1 / (1 - q) + extra
    ks = np.atleast_1d(np.asarray(powers, dtype=float))[:, None]

    def integrand(r):
        lr = np.log(r)
        base = np.log(r**4 + B * r * r + L)
        return np.exp((ks + N - 1) * lr - p * base)

    res = integrate_semi_infinite(integrand, rule, scale=_scale(B, L))
    return sphere_area(N) * np.atleast_1d(res.value)


def second_moment_F(N: int, q: float, L: float, B: float, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """F_L(B) = int |y|^2 rho_{B,L}(y) dy."""
    _check_range(N, q)
    if B < 0 or L < 0 or (B == 0 and L == 0):
        raise ParameterError(f"need B > 0 or L > 0 (got B={B}, L={L})")
    return _amp(q) * float(_radial(N, q, L, B, [2], rule=rule)[0])


def c_Nq(N: int, q: float) -> float:
    """|S^{N-1}| int r^(N+1) (r^4+r^2)^(-1/(1-q)) dr in closed form."""
    p = 1 / (1 - q)
    return 0.5 * sphere_area(N) * math.exp(log_beta(N / 2 - p + 1, 2 * p - N / 2 - 1))


def c_prime_Nq(N: int, q: float) -> float:
    """|S^{N-1}| int r^(N-1) (r^4+r^2)^(-1/(1-q)) dr; needs q < (N-2)/N."""
    p = 1 / (1 - q)
    return 0.5 * sphere_area(N) * math.exp(log_beta(N / 2 - p, 2 * p - N / 2))


def B0_closed_form(N: int, q: float) -> float:
    """B(0) from B(0)^(2/(1-q) - N/2) = kappa c_{N,q} (q/(1-q))^(1/(1-q))."""
    _check_range(N, q)
    p = 1 / (1 - q)
    return (kappa(N) * c_Nq(N, q) * _amp(q)) ** (1 / (2 * p - N / 2))


def mass_at_zero_closed_form(N: int, q: float) -> float:
    if q >= (N - 2) / N:
        return DIVERGENT
    return 0.5 * (q - (N - 2) / (N + 2)) / ((N - 2) / N - q)


def solve_B(N: int, q: float, L: float, rule: QuadratureRule = DEFAULT_RULE,
            hint: float | None = None, root_cfg: RootConfig = RootConfig(abs_tol=1e-13)) -> float:
    """Unique B(L) > 0 with B = kappa F_L(B), found in log B."""
    _check_range(N, q)
    if L < 0:
        raise ParameterError(f"L must be >= 0, got {L}")
    k = kappa(N)

    def h(x):
        B = math.exp(x)
        return math.log(B) - math.log(k * second_moment_F(N, q, L, B, rule))

    B0 = B0_closed_form(N, q)
    if L == 0:
        lo, hi = math.log(B0) - 3 * math.log(10), math.log(B0) + 3 * math.log(10)
    else:
        # B(L) <= B(0); walk down from the hint (or B(0)) until the sign flips
        hi = math.log(B0)
        start = math.log(min(hint, B0)) if hint else hi
        lo = start - 0.5
        while h(lo) > 0:
            hi, lo = lo, lo - 2.0
            if lo < -700:
                raise ArithmeticError(f"could not bracket B(L) for L={L}")
    return math.exp(find_root_bracketed(h, lo, hi, root_cfg))


def mass_at(N: int, q: float, L: float, rule: QuadratureRule = DEFAULT_RULE,
            B: float | None = None) -> float:
    """m(L) = int rho_L; DIVERGENT at L = 0 when q >= (N-2)/N."""
    _check_range(N, q)
    if L == 0 and q >= (N - 2) / N:
        return DIVERGENT
    if B is None:
        B = solve_B(N, q, L, rule)
    return _amp(q) * float(_radial(N, q, L, B, [0], rule=rule)[0])


def mass_derivative(N: int, q: float, L: float, rule: QuadratureRule = DEFAULT_RULE,
                    details: bool = False):
    """m'(L) from the implicit-function formula, with phi-moments of order 0, 2, 4."""
    if not L > 0:
        raise ParameterError("mass_derivative needs L > 0")
    B = solve_B(N, q, L, rule)
    pref = _amp(q) / (1 - q)
    I0, I2, I4 = pref * _radial(N, q, L, B, [0, 2, 4], extra=1.0, rule=rule)
    k = kappa(N)
    dB = -k * I2 / (1 + k * I4)
    dm = -(I0 + dB * I2)
    if details:
        return {"dm": dm, "dB": dB, "phi0": I0, "phi2": I2, "phi4": I4, "B": B}
    return dm


def solve_minimizer_quartic(N: int, q: float, allow_formal: bool = False,
                            rule: QuadratureRule = DEFAULT_RULE) -> QuarticSolution:
    """Unique minimizer (rho_*, M_*) at lambda = 4.

    Raises ParameterError when the free energy is unbounded below and no
    formal answer is available (or, for N <= 5, not requested).
    """
    params = ProblemParams(N, 4.0, q)
    regime = classify_regime(params)
    formal = regime is Regime.QUARTIC_FORMAL
    # below N/(N+4) the answer is formal; for N <= 5 this must be asked for explicitly,
    # for N >= 6 the concentrated closed form is returned tagged as formal
    if regime is Regime.UNBOUNDED_BELOW or (formal and not allow_formal and N <= 5):
        raise ParameterError(f"q={q} is in regime {regime.value} for N={N}, lambda=4")
    if not q < N / (N + 2):
        raise ParameterError(f"q={q} >= N/(N+2): outside the quartic solver domain")
    qc = critical_q4(N)
    if abs(q - qc) < 1e-14:
        B = B0_closed_form(N, q)
        return QuarticSolution(N, q, 0.0, B, 1.0, 0.0, Branch.BOUNDARY, regime, formal)
    if q < qc:
        B = B0_closed_form(N, q)
        atom = 1.5 * (qc - q) / ((N - 2) / N - q)
        return QuarticSolution(N, q, 0.0, B, 1.0 - atom, atom, Branch.CONCENTRATED, regime, formal)

    cache = {}

    def g(x):
        L = math.exp(x)
        cache[x] = B = solve_B(N, q, L, rule)
        return math.log(mass_at(N, q, L, rule, B=B))

    hi = 0.0
    while g(hi) > 0:
        hi += math.log(2.0)
    lo = hi - math.log(2.0)
    while g(lo) < 0:
        lo -= math.log(2.0)
        if lo < -700:
            raise ArithmeticError("could not bracket L* from below")
    x = find_root_bracketed(g, lo, hi, RootConfig(abs_tol=1e-12))
    L = math.exp(x)
    B = cache.get(x) or solve_B(N, q, L, rule)
    m = mass_at(N, q, L, rule, B=B)
    return QuarticSolution(N, q, L, B, m, 0.0, Branch.INTERIOR, regime, formal)


def density_eval_quartic(sol: QuarticSolution, r):
    """(q/(1-q))^(1/(1-q)) (r^4 + B r^2 + L)^(-1/(1-q)); +inf at r = 0 when L = 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        out = _amp(sol.q) * (r**4 + sol.B * r * r + sol.L) ** (-1 / (1 - sol.q))
    return float(out) if out.ndim == 0 else out


def density_function(N: int, q: float, B: float, L: float) -> Callable:
    amp, p = _amp(q), 1 / (1 - q)
    return lambda r: amp * np.exp(-p * np.log(r**4 + B * r * r + L))


def free_energy_quartic(density: Callable, M: float, N: int, q: float,
                        rule: QuadratureRule = DEFAULT_RULE, scale: float = 1.0) -> float:
    """int |x|^4 rho + (1+2/N) (int |x|^2 rho)^2 - (1/(1-q)) int rho^q.

    The atom M only enters through the mass constraint and is checked, not used.
    """
    if not 0 <= M <= 1:
        raise ParameterError(f"atom mass must lie in [0, 1], got {M}")
    S = sphere_area(N)

    def integrand(r):
        rho = density(r)
        base = r ** (N - 1)
        return np.vstack([base * r**4 * rho, base * r * r * rho, base * rho**q])

    res = integrate_semi_infinite(integrand, rule, scale=scale)
    m4, m2, mq = S * np.asarray(res.value)
    if not np.all(np.isfinite([m4, m2, mq])):
        raise ArithmeticError("divergent moment in the quartic free energy")
    return float(m4 + (1 + 2 / N) * m2 * m2 - mq / (1 - q))
