"""Integrals over (0, inf) of radial integrands with algebraic endpoint behavior.

Two modes:

``gauss``
    r = scale * u / (1 - u), composite Gauss-Legendre panels on u in (0, 1).
    Panels are graded geometrically toward both ends of the u interval, so an
    integrand behaving like r^a at 0 (a > -1) or r^-b at infinity (b > 1)
    is resolved without special casing. Panels whose 32- and 64-point sums
    disagree are bisected. What lies beyond the outermost panels is added
    from the local power law, whose exponent is read off the integrand (or
    given by the caller).

``riemann``
    Plain Riemann sum on the regular grid r_k = k * r_max / n, k = 1..n.
    Kept for reproducing fixed-grid computations; no error estimate.

Integrands take a 1-d array of radii and return an array whose last axis
matches it, so vector-valued integrands (several moments at once) share
the same evaluations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .specfun import sphere_area

_U_EDGE = 1e-12
_GRADING = 1.0 / 16.0


class QuadMode(str, enum.Enum):
    TRANSFORMED_GAUSS = "gauss"
    UNIFORM_RIEMANN = "riemann"


class QuadratureError(ArithmeticError):
    """Integral failed to converge; ``best`` carries the last estimate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class QuadratureRule:
    mode: QuadMode = QuadMode.TRANSFORMED_GAUSS
    npoints: int = 64
    r_max: float = 20.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_bisections: int = 40
    max_panels: int = 4000

    def __post_init__(self):
        object.__setattr__(self, "mode", QuadMode(self.mode))
        if self.npoints < 16:
            raise ValueError(f"npoints must be >= 16, got {self.npoints}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.mode is QuadMode.UNIFORM_RIEMANN and not self.r_max > 0:
            raise ValueError("r_max must be positive")

    @classmethod
    def riemann(cls, npoints: int = 1000, r_max: float = 20.0) -> "QuadratureRule":
        return cls(mode=QuadMode.UNIFORM_RIEMANN, npoints=npoints, r_max=r_max)

    def with_(self, **kw) -> "QuadratureRule":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "npoints": self.npoints,
            "r_max": self.r_max,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_bisections": self.max_bisections,
            "max_panels": self.max_panels,
        }


DEFAULT_RULE = QuadratureRule()
REFERENCE_GRID = QuadratureRule.riemann(1000, 20.0)


@dataclass
class IntegralResult:
    value: float | np.ndarray
    err_estimate: float
    evaluations: int


@lru_cache(maxsize=8)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _initial_panels(grading: float = _GRADING, u_edge: float = _U_EDGE):
    """Panels (lo, hi, side) graded toward u = 0 and u = 1.

    Panels with side 0 are intervals in u on (0, 1/2]; side 1 panels are
    intervals in v = 1 - u, so that radii near infinity are formed without
    cancellation in 1 - u.
    """
    edges = [0.5, 0.25]
    while edges[-1] * grading > u_edge:
        edges.append(edges[-1] * grading)
    edges.append(u_edge)
    e = np.array(edges[::-1])
    lo = np.concatenate([e[:-1], e[:-1]])
    hi = np.concatenate([e[1:], e[1:]])
    side = np.repeat([0, 1], len(e) - 1)
    return lo, hi, side


def _map(x, side, scale):
    """Radius and Jacobian for panel coordinate x."""
    right = side.astype(bool)[:, None]
    u = np.where(right, 1.0 - x, x)
    v = np.where(right, x, 1.0 - x)
    return scale * u / v, scale / np.where(right, x, v) ** 2


def _panel_sums(f, lo, hi, side, scale, n):
    """Gauss sums of order n and n/2 on each panel, for r = scale u/(1-u)."""
    x_hi, w_hi = _gl(n)
    x_lo, w_lo = _gl(n // 2)
    x = np.concatenate([x_hi, x_lo])
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    u = mid[:, None] + half[:, None] * x[None, :]
    r, jac = _map(u, side, scale)
    vals = np.asarray(f(r.ravel()), dtype=float)
    vals = vals.reshape(vals.shape[:-1] + u.shape) * jac
    s_hi = np.einsum("...pk,k->...p", vals[..., :n], w_hi) * half
    s_lo = np.einsum("...pk,k->...p", vals[..., n:], w_lo) * half
    return s_hi, s_lo, u.size


def _tail(f, r0, toward_zero: bool, exponent):
    """Contribution beyond r0 assuming f ~ C r^a there.

    Returns (value, error estimate). ``exponent`` is a (if known);
    otherwise it is estimated from f at r0, r0/2, r0/4 (or 2 r0, 4 r0).
    """
    step = 0.5 if toward_zero else 2.0
    pts = np.array([r0, r0 * step, r0 * step * step])
    raw = np.asarray(f(pts), dtype=float)
    vals = raw.reshape(-1, 3)
    f0 = vals[:, 0]
    out = np.zeros_like(f0)
    err = np.zeros_like(f0)
    for i, (v0, v1, v2) in enumerate(vals):
        if v0 == 0.0:
            continue
        if exponent is not None:
            a1 = a2 = float(exponent)
        elif v0 * v1 > 0 and v1 * v2 > 0:
            a1 = math.log(v1 / v0) / math.log(step)
            a2 = math.log(v2 / v1) / math.log(step)
        else:
            err[i] = abs(v0 * r0)
            continue
        p1, p2 = a1 + 1.0, a2 + 1.0
        if (p1 <= 0 or p2 <= 0) if toward_zero else (p1 >= 0 or p2 >= 0):
            raise QuadratureError(f"integrand not integrable near r={'0' if toward_zero else 'inf'} "
                                  f"(local exponent {a1:.4g})")
        t1 = v0 * r0 / p1
        t2 = v0 * r0 / p2
        if not toward_zero:
            t1, t2 = -t1, -t2
        out[i] = t1
        err[i] = abs(t1 - t2)
    shape = raw.shape[:-1]
    return out.reshape(shape), err


def integrate_semi_infinite(
    f: Callable[[np.ndarray], np.ndarray],
    rule: QuadratureRule = DEFAULT_RULE,
    *,
    scale: float = 1.0,
    exponents: tuple[float | None, float | None] = (None, None),
) -> IntegralResult:
    """Integrate f over (0, inf).

    ``scale`` sets the radius mapped to u = 1/2. ``exponents`` optionally
    gives the power a of f ~ r^a at 0 and at infinity (pass None to let the
    routine estimate it).
    """
    if rule.mode is QuadMode.UNIFORM_RIEMANN:
        h = rule.r_max / rule.npoints
        r = h * np.arange(1, rule.npoints + 1)
        vals = np.asarray(f(r), dtype=float)
        value = h * vals.sum(axis=-1)
        return IntegralResult(value=_squeeze(value), err_estimate=math.inf, evaluations=rule.npoints)

    n = rule.npoints + (rule.npoints % 2)
    lo, hi, side = _initial_panels()
    s_hi, s_lo, evals = _panel_sums(f, lo, hi, side, scale, n)
    diff = np.abs(s_hi - s_lo)
    for _ in range(rule.max_bisections + 1):
        value = s_hi.sum(axis=-1)
        # each component gets its own budget max(rel_tol |value_k|, abs_tol)
        tol = np.maximum(rule.rel_tol * np.abs(value), rule.abs_tol)[..., None]
        share = diff / tol
        if share.ndim > 1:
            share = share.reshape(-1, share.shape[-1]).max(axis=0)
        total_err = float(np.max(diff.sum(axis=-1)))
        if float(np.max((diff / tol).sum(axis=-1))) <= 1.0:
            break
        # bisect the panels carrying more than their share of the error budget
        bad = share > 1.0 / len(lo)
        if len(lo) + int(bad.sum()) > rule.max_panels:
            raise QuadratureError(f"panel budget {rule.max_panels} exhausted (error {total_err:.3g})",
                                  best=_squeeze(value))
        mid = 0.5 * (lo[bad] + hi[bad])
        new_lo = np.concatenate([lo[bad], mid])
        new_hi = np.concatenate([mid, hi[bad]])
        new_side = np.concatenate([side[bad], side[bad]])
        n_hi, n_lo, k = _panel_sums(f, new_lo, new_hi, new_side, scale, n)
        evals += k
        lo = np.concatenate([lo[~bad], new_lo])
        hi = np.concatenate([hi[~bad], new_hi])
        side = np.concatenate([side[~bad], new_side])
        s_hi = np.concatenate([s_hi[..., ~bad], n_hi], axis=-1)
        diff = np.concatenate([diff[..., ~bad], np.abs(n_hi - n_lo)], axis=-1)
    else:
        raise QuadratureError(f"no convergence after {rule.max_bisections} bisection rounds "
                              f"(error {total_err:.3g})", best=_squeeze(value))

    r_lo = scale * _U_EDGE / (1 - _U_EDGE)
    r_hi = scale * (1 - _U_EDGE) / _U_EDGE
    t0, e0 = _tail(f, r_lo, True, exponents[0])
    t1, e1 = _tail(f, r_hi, False, exponents[1])
    value = value + t0 + t1
    if not np.all(np.isfinite(value)):
        raise QuadratureError("non-finite integral", best=_squeeze(value))
    err = total_err + float(np.max(e0)) + float(np.max(e1))
    return IntegralResult(value=_squeeze(value), err_estimate=err, evaluations=evals + 6)


def _squeeze(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def weighted_moment(profile: Callable, k: float, N: int, rule: QuadratureRule = DEFAULT_RULE,
                    **kw) -> float:
    """|S^{N-1}| * int_0^inf r^(k+N-1) profile(r) dr, the k-th radial moment."""
    res = integrate_semi_infinite(lambda r: r ** (k + N - 1) * profile(r), rule, **kw)
    return sphere_area(N) * res.value


def discretize(rule: QuadratureRule, scale: float = 1.0, grading: float = 0.25,
               u_edge: float = 1e-10, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Fixed nodes and weights on (0, inf) for discretized integral equations.

    For ``riemann`` this is the regular grid itself. For ``gauss`` it is a
    non-adaptive graded composite rule (``order`` points per panel).
    """
    if rule.mode is QuadMode.UNIFORM_RIEMANN:
        h = rule.r_max / rule.npoints
        return h * np.arange(1, rule.npoints + 1), np.full(rule.npoints, h)
    lo, hi, side = _initial_panels(grading, u_edge)
    x, w = _gl(order)
    half = 0.5 * (hi - lo)
    u = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    r, jac = _map(u, side, scale)
    wr = half[:, None] * w[None, :] * jac
    order_idx = np.argsort(r.ravel())
    return r.ravel()[order_idx], wr.ravel()[order_idx]
