"""Special functions and the radial interaction kernel K_{N,lambda}(r, s).

K_{N,lambda}(r, s) is the average of |r w - s w'|^lambda over pairs of unit
vectors. Four evaluation routes are provided and cross-checked in the tests:

* ``even``      -- finite polynomial in r^2, s^2 when lambda = 2n
* ``closed3``   -- elementary closed form in dimension 3
* ``hyper``     -- (r^2+s^2)^(lambda/2) 2F1((2-lambda)/4, -lambda/4; N/2; z)
* ``gegenbauer``-- direct quadrature of the angular integral (the oracle)
"""

from __future__ import annotations

import enum
import logging
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import ParameterError, is_even_lambda

log = logging.getLogger(__name__)

_SERIES_TOL = 1e-16
_SERIES_CAP = 100_000
_DIRECT_MAX_Z = 0.75
_DEGENERATE_TOL = 1e-9
_DEGENERATE_SHIFT = 2e-4


class KernelMethod(str, enum.Enum):
    EVEN_POLYNOMIAL = "even"
    CLOSED_FORM_N3 = "closed3"
    HYPERGEOMETRIC = "hyper"
    GEGENBAUER_ORACLE = "gegenbauer"


def log_gamma(x: float) -> float:
    if not x > 0:
        raise ParameterError(f"log_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def log_beta(a: float, b: float) -> float:
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^(N-1) in R^N."""
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def _is_nonpos_int(x: float) -> bool:
    return x <= 0 and abs(x - round(x)) < 1e-14


def _signed_log_gamma(x: float) -> tuple[float, float]:
    """(log|Gamma(x)|, sign Gamma(x)); sign 0 marks a pole."""
    if _is_nonpos_int(x):
        return math.inf, 0.0
    if x > 0:
        return math.lgamma(x), 1.0
    sign = -1.0 if math.floor(-x) % 2 == 0 else 1.0
    return math.lgamma(x), sign


def _gamma_ratio(nums, dens) -> float:
    """prod Gamma(nums) / prod Gamma(dens); a pole in ``dens`` gives 0."""
    total, sign = 0.0, 1.0
    for x in dens:
        lg, sg = _signed_log_gamma(x)
        if sg == 0:
            return 0.0
        total -= lg
        sign *= sg
    for x in nums:
        lg, sg = _signed_log_gamma(x)
        if sg == 0:
            raise ParameterError(f"Gamma pole at {x} in a numerator")
        total += lg
        sign *= sg
    return sign * math.exp(total)


def _terminates(a: float, b: float) -> bool:
    return _is_nonpos_int(a) or _is_nonpos_int(b)


def _series(a, b, c, z, minus_one=False):
    """Direct hypergeometric series, summed until the term ratio drops below tolerance."""
    z = np.asarray(z, dtype=float)
    term = np.ones_like(z)
    total = np.zeros_like(z) if minus_one else np.ones_like(z)
    for k in range(_SERIES_CAP):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1))) * z
        total = total + term
        if not np.any(np.abs(term) > _SERIES_TOL * np.abs(total)):
            return total
    raise ArithmeticError(f"2F1 series did not converge for a={a}, b={b}, c={c}")


def _connection(a, b, c, z, omz):
    """2F1 for z near 1 from the z -> 1-z linear transformation."""
    s = c - a - b
    A1 = _gamma_ratio([c, s], [c - a, c - b])
    A2 = _gamma_ratio([c, -s], [a, b])
    out = A1 * _series(a, b, 1 - s, omz)
    if A2 != 0.0:
        with np.errstate(divide="ignore"):
            out = out + A2 * omz**s * _series(c - a, c - b, s + 1, omz)
    return out


def hyp2f1(a: float, b: float, c: float, z, one_minus_z=None):
    """Vectorized Gauss hypergeometric function on 0 <= z <= 1.

    ``one_minus_z`` may be supplied when 1-z is known more accurately than z.
    """
    if _is_nonpos_int(c):
        raise ParameterError(f"2F1 undefined for c={c}")
    z = np.asarray(z, dtype=float)
    omz = 1.0 - z if one_minus_z is None else np.asarray(one_minus_z, dtype=float)
    if np.any(z < 0) or np.any(z > 1):
        raise ParameterError("hyp2f1 supports 0 <= z <= 1 only")
    if _terminates(a, b):
        return _series(a, b, c, z)
    s = c - a - b
    if np.any(omz == 0) and not s > 0:
        raise ParameterError(f"2F1 diverges at z=1 for c-a-b={s}")
    out = np.empty_like(z)
    near = z > _DIRECT_MAX_Z
    if np.any(~near):
        out[~near] = _series(a, b, c, z[~near])
    if np.any(near):
        zn, on = z[near], omz[near]
        if abs(s - round(s)) < _DEGENERATE_TOL:
            # logarithmic case of the connection formula: symmetric shifts in a,
            # Richardson-extrapolated so the bias is O(h^4)
            log.debug("2F1 degenerate c-a-b=%r, shifting a by +/- %g", s, _DEGENERATE_SHIFT)

            def shifted(h):
                return 0.5 * (_connection(a + h, b, c, zn, on) + _connection(a - h, b, c, zn, on))

            h = _DEGENERATE_SHIFT
            out[near] = (4 * shifted(h) - shifted(2 * h)) / 3
        else:
            out[near] = _connection(a, b, c, zn, on)
    return out


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Scalar 2F1(a, b; c; z) for z in [0, 1]; Gauss summation at z = 1."""
    if z == 1.0:
        if _is_nonpos_int(c):
            raise ParameterError(f"2F1 undefined for c={c}")
        if _terminates(a, b):
            return float(_series(a, b, c, np.array([1.0]))[0])
        if not c - a - b > 0:
            raise ParameterError(f"2F1 diverges at z=1 for c-a-b={c - a - b}")
        return _gamma_ratio([c, c - a - b], [c - a, c - b])
    return float(hyp2f1(a, b, c, np.array([z], dtype=float))[0])


@lru_cache(maxsize=None)
def even_kernel_coefficients(N: int, n: int) -> tuple[Fraction, ...]:
    """Exact coefficients of r^(2i) s^(2n-2i), i = 0..n, in K_{N,2n}(r, s).

    Expands (r^2 + s^2 - 2 r s t)^n and averages t^(2j) over the sphere, where
    E[t^(2j)] = (1/2)_j / (N/2)_j.
    """
    coeffs = [Fraction(0)] * (n + 1)
    moment = Fraction(1)
    for j in range(n // 2 + 1):
        if j > 0:
            moment *= Fraction(2 * j - 1, N + 2 * j - 2)
        k = 2 * j
        # C(n,k) (r^2+s^2)^(n-k) (2rs)^k E[t^k]
        pref = math.comb(n, k) * 2**k * moment
        for m in range(n - k + 1):
            # r^(2m) s^(2(n-k-m)) from (r^2+s^2)^(n-k), times r^k s^k
            coeffs[m + j] += pref * math.comb(n - k, m)
    return tuple(coeffs)


def even_coefficients(N: int, n: int) -> np.ndarray:
    """c_i^lambda for lambda = 2n, i = 1..n-1 (the interior coefficients)."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return np.array([float(c) for c in even_kernel_coefficients(N, n)[1:n]])


def _kernel_even(N, lam, r, s):
    n = int(round(lam / 2))
    coeffs = even_kernel_coefficients(N, n)
    r2, s2 = r * r, s * s
    out = np.zeros(np.broadcast(r, s).shape)
    for i, c in enumerate(coeffs):
        out = out + float(c) * r2**i * s2 ** (n - i)
    return out


def _kernel_closed3(lam, r, s):
    m = lam + 2.0
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    out = np.array(big**lam, dtype=float)
    pos = small > 0
    B, S = big[pos], small[pos]
    t = S / B
    direct = ((B + S) ** m - (B - S) ** m) / (2 * m * B * S)
    # (1+t)^m - (1-t)^m = 2 (1-t^2)^(m/2) sinh(m atanh t), free of cancellation for small t
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = B**m * (1 - t * t) ** (m / 2) * np.sinh(m * np.arctanh(t)) / (m * B * S)
    out[pos] = np.where(t < 0.5, stable, direct)
    return out


def _kernel_args(r, s):
    """(r^2+s^2, z, 1-z) with z = 4 r^2 s^2 / (r^2+s^2)^2 computed stably."""
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(big > 0, small / np.where(big > 0, big, 1.0), 0.0)
    t2 = t * t
    z = (2 * t / (1 + t2)) ** 2
    omz = ((1 - t) * (1 + t) / (1 + t2)) ** 2
    return r * r + s * s, z, omz


def _kernel_hyper(N, lam, r, s):
    rho2, z, omz = _kernel_args(r, s)
    F = hyp2f1((2 - lam) / 4, -lam / 4, N / 2, z, one_minus_z=omz)
    return rho2 ** (lam / 2) * F


@lru_cache(maxsize=16)
def _angular_rule(N: int, order: int = 48, levels: int = 24):
    """Composite Gauss-Legendre nodes/weights on [0, pi] for sin^(N-2)(phi) d phi.

    Panels are graded geometrically toward phi = 0, where the integrand is
    nearly singular when r is close to s.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [0.0] + [math.pi * 2.0 ** (-k) for k in range(levels, 0, -1)] + [math.pi]
    edges = sorted(set(edges))
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    phi = np.concatenate(nodes)
    wt = np.concatenate(weights) * np.sin(phi) ** (N - 2)
    ratio = math.gamma(N / 2) / (math.sqrt(math.pi) * math.gamma((N - 1) / 2))
    return phi, wt * ratio


def kernel_gegenbauer_oracle(N: int, lam: float, r, s):
    """K_{N,lambda}(r, s) by direct quadrature of the angular integral.

    Uses |S^{N-2}|/|S^{N-1}| * int_0^pi (r^2+s^2-2 r s cos phi)^(lambda/2) sin^(N-2) phi dphi,
    written with (r-s)^2 + 4 r s sin^2(phi/2) to keep the base accurate.
    """
    if N < 2:
        raise ParameterError("the angular-integral oracle needs N >= 2")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    phi, wt = _angular_rule(int(N))
    rr = r[..., None]
    ss = s[..., None]
    base = (rr - ss) ** 2 + 4 * rr * ss * np.sin(phi / 2) ** 2
    val = np.sum(base ** (lam / 2) * wt, axis=-1)
    # sanity residual: the rule must integrate the constant exactly
    resid = abs(np.sum(wt) - 1.0)
    if resid > 1e-12:
        raise ArithmeticError(f"angular quadrature failed to normalize (residual {resid:.2e})")
    return val


def kernel_K(N: int, lam: float, r, s, method: KernelMethod | str = KernelMethod.HYPERGEOMETRIC):
    """Radial interaction kernel K_{N,lambda}(r, s), broadcasting over r and s."""
    method = KernelMethod(method)
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    scalar = r.ndim == 0 and s.ndim == 0
    r, s = np.broadcast_arrays(np.atleast_1d(r), np.atleast_1d(s))
    if np.any(r < 0) or np.any(s < 0):
        raise ParameterError("kernel arguments must be non-negative")
    if method is KernelMethod.EVEN_POLYNOMIAL:
        if not is_even_lambda(lam):
            raise ParameterError(f"even polynomial kernel needs even lambda, got {lam}")
        out = _kernel_even(N, lam, r, s)
    elif method is KernelMethod.CLOSED_FORM_N3:
        if N != 3:
            raise ParameterError(f"closed form is only valid for N=3, got N={N}")
        out = _kernel_closed3(lam, r, s)
    elif method is KernelMethod.HYPERGEOMETRIC:
        out = _kernel_hyper(N, lam, r, s)
    else:
        out = kernel_gegenbauer_oracle(N, lam, r, s)
    return float(out.reshape(-1)[0]) if scalar else out


def applicable_methods(N: int, lam: float) -> list[KernelMethod]:
    methods = [KernelMethod.HYPERGEOMETRIC]
    if is_even_lambda(lam):
        methods.insert(0, KernelMethod.EVEN_POLYNOMIAL)
    if N == 3:
        methods.append(KernelMethod.CLOSED_FORM_N3)
    if N >= 2:
        methods.append(KernelMethod.GEGENBAUER_ORACLE)
    return methods


def kernel_excess(N: int, lam: float, r, s):
    """K_{N,lambda}(r, s) - s^lambda without cancellation when r << s."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    r, s = np.broadcast_arrays(r, s)
    if is_even_lambda(lam):
        # sum_{i>=1} c_i r^(2i) s^(2n-2i): all terms positive, nothing cancels
        n = int(round(lam / 2))
        coeffs = even_kernel_coefficients(N, n)
        r2, s2 = r * r, s * s
        out = np.zeros(r.shape)
        for i in range(1, n + 1):
            out = out + float(coeffs[i]) * r2**i * s2 ** (n - i)
        return out
    rho2, z, omz = _kernel_args(r, s)
    a, b, c = (2 - lam) / 4, -lam / 4, N / 2
    out = np.empty(r.shape)
    small = (r < s) & (z <= _DIRECT_MAX_Z)
    if np.any(small):
        rs, ss = r[small], s[small]
        Fm1 = _series(a, b, c, z[small], minus_one=True)
        grow = ss**lam * np.expm1((lam / 2) * np.log1p((rs / ss) ** 2))
        out[small] = rho2[small] ** (lam / 2) * Fm1 + grow
    rest = ~small
    if np.any(rest):
        F = hyp2f1(a, b, c, z[rest], one_minus_z=omz[rest])
        out[rest] = rho2[rest] ** (lam / 2) * F - s[rest] ** lam
    return out
