"""Bracketed root finding (Brent) and BFGS minimization with backtracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_EPS = np.finfo(float).eps


class BracketError(ValueError):
    pass


class ConvergenceError(ArithmeticError):
    def __init__(self, msg, bracket=None):
        super().__init__(msg)
        self.bracket = bracket


@dataclass(frozen=True)
class RootConfig:
    abs_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0 or self.max_iter < 10:
            raise ValueError("RootConfig needs abs_tol > 0 and max_iter >= 10")


@dataclass(frozen=True)
class QuasiNewtonConfig:
    grad_tol: float = 1e-10
    step_tol: float = 1e-14
    max_iter: int = 500
    fd_step: float = 1e-7
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_step: float = math.inf

    def __post_init__(self):
        if min(self.grad_tol, self.step_tol, self.fd_step) <= 0 or self.max_iter < 50:
            raise ValueError("QuasiNewtonConfig fields must be positive, max_iter >= 50")


def find_root_bracketed(f: Callable[[float], float], a: float, b: float,
                        cfg: RootConfig = RootConfig()) -> float:
    """Root of f in [a, b] by Brent's method (bisection, secant, inverse quadratic).

    The returned point lies in [a, b] and the final bracket is no wider than
    ``cfg.abs_tol`` (or a few ulps of the root, whichever is larger).
    """
    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if not (math.isfinite(fa) and math.isfinite(fb)) or fa * fb > 0:
        raise BracketError(f"f({a})={fa} and f({b})={fb} do not bracket a root")
    c, fc = a, fa
    d = e = b - a
    for _ in range(cfg.max_iter):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = max(0.5 * cfg.abs_tol, 2 * _EPS * abs(b))
        m = 0.5 * (c - b)
        if abs(m) <= tol or fb == 0:
            return b
        if abs(e) >= tol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p, qq = 2 * m * s, 1 - s
            else:
                qa, r = fa / fc, fb / fc
                p = s * (2 * m * qa * (qa - r) - (b - a) * (r - 1))
                qq = (qa - 1) * (r - 1) * (s - 1)
            if p > 0:
                qq = -qq
            else:
                p = -p
            if 2 * p < min(3 * m * qq - abs(tol * qq), abs(e * qq)):
                e, d = d, p / qq
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b = b + (d if abs(d) > tol else math.copysign(tol, m))
        fb = f(b)
        if not math.isfinite(fb):
            raise ConvergenceError(f"non-finite f({b}) during root search", bracket=(b, c))
    raise ConvergenceError(f"root not found in {cfg.max_iter} iterations", bracket=(min(b, c), max(b, c)))


def fd_gradient(obj: Callable, x: np.ndarray, rel_step: float = 1e-7) -> np.ndarray:
    """Central-difference gradient with steps rel_step * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (obj(xp) - obj(xm)) / (2 * h)
    return g


def check_gradient(obj: Callable, grad: Callable, x: np.ndarray, rel_step: float = 1e-6) -> float:
    """Max relative deviation between an analytic gradient and central differences."""
    ga = np.asarray(grad(x), dtype=float)
    gf = fd_gradient(obj, x, rel_step)
    return float(np.max(np.abs(ga - gf)) / max(np.max(np.abs(gf)), 1e-300))


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    nit: int
    grad_norm: float
    message: str
    history: list[float] = field(default_factory=list)


def minimize_quasi_newton(obj: Callable[[np.ndarray], float], x0, grad: Callable | None = None,
                          cfg: QuasiNewtonConfig = QuasiNewtonConfig()) -> OptimizeResult:
    """BFGS with an Armijo backtracking line search.

    Objective values of +inf are treated as rejected trial points (the line
    search backs off); NaN is an error. The inverse Hessian is reset to a
    scaled identity whenever the curvature condition y.s > 0 fails.
    """
    if grad is None:
        def grad(x):
            return fd_gradient(obj, x, cfg.fd_step)

    x = np.array(x0, dtype=float)
    fx = float(obj(x))
    if not math.isfinite(fx):
        raise ValueError(f"objective is not finite at the starting point ({fx})")
    g = np.asarray(grad(x), dtype=float)
    n = x.size
    H = np.eye(n)
    history = [fx]
    first = True
    message = "maximum iterations reached"
    converged = False
    k = 0
    for k in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm < cfg.grad_tol:
            converged, message = True, "gradient tolerance reached"
            break
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
        # cap the trial step length in the sup norm
        pmax = float(np.max(np.abs(p))) if n else 0.0
        t = min(1.0, cfg.max_step / pmax) if pmax > 0 else 1.0
        while True:
            x_new = x + t * p
            f_new = float(obj(x_new))
            if math.isnan(f_new):
                raise ArithmeticError(f"objective returned NaN at iteration {k}")
            if f_new <= fx + cfg.armijo * t * slope:
                break
            t *= cfg.backtrack
            if t * np.linalg.norm(p) < cfg.step_tol:
                f_new = None
                break
        if f_new is None:
            converged, message = True, "step tolerance reached"
            break
        s = x_new - x
        g_new = np.asarray(grad(x_new), dtype=float)
        y = g_new - g
        sy = float(s @ y)
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                H = np.eye(n) * (sy / float(y @ y))
                first = False
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        else:
            H = np.eye(n)
            first = True
        if np.linalg.norm(s) < cfg.step_tol:
            converged, message = True, "step tolerance reached"
            break
    else:
        k = cfg.max_iter
    return OptimizeResult(x=x, fun=fx, converged=converged, nit=k, grad_norm=float(np.max(np.abs(g))) if n else 0.0,
                          message=message, history=history)
