from dataclasses import dataclass, asdict
import math


class ParameterError(ValueError):
    """Raised when an exponent/parameter combination is outside the admissible range."""


@dataclass(frozen=True)
class ProblemParams:
    """Exponents and singular weight of ``u_t - Δ_p u - Δ_q u = theta u^-delta + f``.

    ``q == p`` is accepted as the homogeneous limit (useful for linear
    verification cases); configuration parsing insists on ``q < p``.
    """

    p: float
    q: float
    delta: float
    theta: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError(f"p={self.p}: need 1<q<p")
        if not 1 < self.q <= self.p:
            raise ParameterError(f"q={self.q}, p={self.p}: need 1<q<p")
        if not self.delta > 0:
            raise ParameterError(f"delta={self.delta}: need 0<delta")
        if self.theta < 0:
            raise ParameterError(f"theta={self.theta}: need theta >= 0")

    @property
    def delta_crit(self):
        """Critical singularity ``2 + 1/(p-1)``."""
        return 2.0 + 1.0 / (self.p - 1.0)

    @property
    def tau(self):
        """Boundary exponent ``p / (p - 1 + delta)``."""
        return self.p / (self.p - 1.0 + self.delta)

    @property
    def m_crit(self):
        """Gradient integrability threshold ``(p-1+delta)/(delta-1)``, infinite for delta <= 1."""
        if self.delta <= 1:
            return math.inf
        return (self.p - 1.0 + self.delta) / (self.delta - 1.0)

    @property
    def subcritical(self):
        return self.delta < self.delta_crit

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return ProblemParams(**d)
