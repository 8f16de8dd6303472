"""Problem parameters, regime classification and the alpha <-> q change of variables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """Raised when (N, lambda, q) fall outside the domain of an operation."""


class Regime(enum.Enum):
    UNBOUNDED_BELOW = "UnboundedBelow"
    ADMISSIBLE = "Admissible"
    QUARTIC_FORMAL = "QuarticFormal"


def is_even_lambda(lam: float) -> bool:
    return abs(lam / 2 - round(lam / 2)) < 1e-12 and lam > 0


@dataclass(frozen=True)
class ProblemParams:
    N: int
    lam: float
    q: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"dimension must be a positive integer, got {self.N}")
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.q < 1:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")

    @property
    def q_low(self) -> float:
        """Boundedness threshold N/(N+lambda)."""
        return self.N / (self.N + self.lam)

    @property
    def q_high(self) -> float:
        """Upper end N/(N+2) of the window where the moment equations make sense."""
        return self.N / (self.N + 2)

    @property
    def q_mass_finite(self) -> float:
        """Above (N-2)/N the L=0 profile has infinite mass near the origin."""
        return (self.N - 2) / self.N

    @property
    def exponent(self) -> float:
        """1/(1-q), the power of the profile."""
        return 1.0 / (1.0 - self.q)

    @property
    def amplitude(self) -> float:
        """(q/(1-q))^(1/(1-q))."""
        return (self.q / (1.0 - self.q)) ** self.exponent

    @property
    def even_n(self) -> int | None:
        return int(round(self.lam / 2)) if is_even_lambda(self.lam) else None


def classify_regime(p: ProblemParams) -> Regime:
    """Return the regime of ``p``.

    At lambda=4 and N >= 3 the window (N-2)/(N+2) < q <= N/(N+4) is tagged
    QuarticFormal: the free energy is unbounded there but the minimizer
    construction still goes through formally. In N <= 2 the window has no
    positive lower end and is left UnboundedBelow.
    """
    N, lam, q = p.N, p.lam, p.q
    if q > N / (N + lam):
        return Regime.ADMISSIBLE
    if abs(lam - 4) < 1e-12 and N >= 3 and (N - 2) / (N + 2) < q <= N / (N + 4):
        return Regime.QUARTIC_FORMAL
    return Regime.UNBOUNDED_BELOW


def alpha_from_q(p: ProblemParams) -> float:
    N, lam, q = p.N, p.lam, p.q
    return (2 * N - q * (2 * N + lam)) / (N * (1 - q))


def q_from_alpha(N: int, lam: float, alpha: float) -> float:
    den = 2 * N + lam - alpha * N
    if den == 0 or not math.isfinite(den):
        raise ParameterError(f"degenerate alpha={alpha} for N={N}, lambda={lam}")
    return N * (2 - alpha) / den


def alpha_max(N: int, lam: float) -> float:
    """Largest alpha reachable by the moment equations, i.e. q = (N-2)/(N+2)."""
    return 2 - lam / 4 + lam / (2 * N)


def rescale_mass(p: ProblemParams, m: float) -> tuple[float, float]:
    """Scaling (gamma1, gamma2) mapping the unit-mass minimizer to mass ``m``.

    The minimizer of mass m is gamma1 * mu(gamma2 x) with
    gamma1 * gamma2^-N = m and gamma1^(3-q) * gamma2^(-lambda-2N) = m.
    """
    if not m > 0:
        raise ParameterError(f"mass must be positive, got {m}")
    N, lam, q = p.N, p.lam, p.q
    den = N * (1 - q) - lam
    if abs(den) < 1e-14:
        raise ParameterError("degenerate scaling: N(1-q) = lambda")
    log_g2 = (q - 2) / den * math.log(m)
    log_g1 = math.log(m) + N * log_g2
    if max(abs(log_g1), abs(log_g2)) > 700:
        raise ParameterError(f"scaling factors overflow for m={m} (N(1-q) - lambda = {den:.3g})")
    return math.exp(log_g1), math.exp(log_g2)


class Divergent(float):
    """A float equal to +inf, marking an integral known to diverge."""

    def __new__(cls):
        return super().__new__(cls, math.inf)

    def __repr__(self):
        return "Divergent()"


DIVERGENT = Divergent()


def is_divergent(x) -> bool:
    return isinstance(x, Divergent) or (isinstance(x, float) and math.isinf(x) and x > 0)
