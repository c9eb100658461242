"""Scaling frames for the long-time substitution u(x,t) = t^{-beta} v(x/t^{1/2n}, log t).

A frame fixes the PDE order 2n, the spatial dimension d, and the amplitude
exponent beta.  The default frame beta = d/(2n) is the one in which the
constant-profile mode of the rescaled generator is neutral; the d = 1
Cahn-Hilliard frame uses beta = 1/2 so that the conserved first moment is
the neutral quantity instead.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError


@dataclass(frozen=True)
class ScalingFrame:
    """Amplitude/space scaling exponents of a self-similar frame."""

    n: int
    d: int
    beta: Fraction

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"PDE half-order n must be >= 1, got {self.n}")
        if self.d < 1:
            raise ValidationError(f"dimension d must be >= 1, got {self.d}")
        object.__setattr__(self, "beta", Fraction(self.beta))

    @classmethod
    def default(cls, n, d):
        """Frame with beta = d/(2n)."""
        return cls(n, d, Fraction(d, 2 * n))

    @classmethod
    def ch_relevant_d1(cls):
        """The d = 1 Cahn-Hilliard frame: n = 2, beta = 1/2."""
        return cls(2, 1, Fraction(1, 2))

    @property
    def is_default(self):
        return self.beta == Fraction(self.d, 2 * self.n)

    @property
    def space_exponent(self):
        """Exponent of the similarity length scale t^{1/(2n)}."""
        return Fraction(1, 2 * self.n)

    def eta(self, tau):
        """Decaying coordinate e^{-tau/(2n)} of the non-autonomous system."""
        import math

        return math.exp(-tau / (2 * self.n))

    def eta_tilde(self, tau):
        """Slow variant e^{-tau/(4n)} used in the shifted d = 1 frame."""
        import math

        return math.exp(-tau / (4 * self.n))

    def describe(self):
        return {"n": self.n, "d": self.d, "beta": [self.beta.numerator, self.beta.denominator]}
