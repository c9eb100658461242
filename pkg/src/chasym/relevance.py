"""Scaling classification of polynomial nonlinearities.

For the equation du/dt = (-1)^{n+1} Laplacian^n u + F(u, du) with F a sum of
monomials prod_j (d^{alpha_j} u)^{k_j}, rescaling by u = t^{-d/2n} v(x/t^{1/2n})
multiplies each monomial by an exponentially decaying coefficient e^{-p tau/2n}
with the integer scaling exponent

    p = sum_j (|alpha_j| + d) k_j - (2n + d).

A term with p > 0 is irrelevant for the long-time behavior, p = 0 is critical,
p < 0 is relevant.  Everything in this module is exact integer/rational
arithmetic; no floating point.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError
from .frames import ScalingFrame

RELEVANT = "relevant"
CRITICAL = "critical"
IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class MultiIndex:
    """d-tuple of non-negative derivative orders."""

    orders: tuple

    def __post_init__(self):
        orders = tuple(int(o) for o in self.orders)
        if any(o < 0 for o in orders):
            raise ValidationError(f"derivative orders must be >= 0, got {orders}")
        object.__setattr__(self, "orders", orders)

    @property
    def degree(self):
        """Total derivative degree |alpha|."""
        return sum(self.orders)

    @property
    def d(self):
        return len(self.orders)

    def __iter__(self):
        return iter(self.orders)


@dataclass(frozen=True)
class NonlinearTerm:
    """coefficient * prod_j (d^{alpha_j} u)^{k_j} with distinct alpha_j."""

    coefficient: float
    factors: tuple  # of (MultiIndex, power)

    def __post_init__(self):
        factors = tuple((a if isinstance(a, MultiIndex) else MultiIndex(tuple(a)), int(k))
                        for a, k in self.factors)
        if not factors:
            raise ValidationError("a nonlinear term needs at least one factor")
        if any(k < 1 for _, k in factors):
            raise ValidationError("factor powers must be >= 1")
        alphas = [a.orders for a, _ in factors]
        if len(set(alphas)) != len(alphas):
            raise ValidationError(f"multi-indices within a term must be distinct: {alphas}")
        dims = {a.d for a, _ in factors}
        if len(dims) != 1:
            raise ValidationError(f"mixed dimensions within a term: {sorted(dims)}")
        object.__setattr__(self, "factors", factors)

    @property
    def d(self):
        return self.factors[0][0].d

    @property
    def total_power(self):
        """K = sum of the powers k_j."""
        return sum(k for _, k in self.factors)

    @property
    def total_derivatives(self):
        """sum_j |alpha_j| k_j."""
        return sum(a.degree * k for a, k in self.factors)

    def describe(self):
        return {
            "coefficient": self.coefficient,
            "factors": [{"orders": list(a.orders), "power": k} for a, k in self.factors],
        }


@dataclass(frozen=True)
class PDESpec:
    """(-1)^{n+1} Laplacian^n linear part plus a list of monomial terms."""

    n: int
    d: int
    terms: tuple

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValidationError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        terms = tuple(self.terms)
        for t in terms:
            _validate_term(t, self.n, self.d)
        object.__setattr__(self, "terms", terms)

    def describe(self):
        return {"n": self.n, "d": self.d, "terms": [t.describe() for t in self.terms]}


@dataclass(frozen=True)
class Classification:
    """Trichotomy label with its integer scaling exponent."""

    label: str
    p: int
    K: int

    def __post_init__(self):
        expected = RELEVANT if self.p < 0 else (CRITICAL if self.p == 0 else IRRELEVANT)
        if self.label != expected:
            raise ValidationError(f"label {self.label!r} inconsistent with p={self.p}")


def _validate_term(term, n, d):
    if term.d != d:
        raise ValidationError(f"term has dimension {term.d}, expected {d}")
    for a, _ in term.factors:
        if a.degree > 2 * n - 1:
            raise ValidationError(
                f"derivative degree |alpha|={a.degree} exceeds 2n-1={2 * n - 1}")


def classify_term(term, n, d):
    """Classify one monomial under the default scaling frame.

    Returns a :class:`Classification` with the exact integer exponent
    p = sum_j (|alpha_j| + d) k_j - (2n + d).  The result is independent of
    the term's coefficient.
    """
    _validate_term(term, n, d)
    p = sum((a.degree + d) * k for a, k in term.factors) - (2 * n + d)
    label = RELEVANT if p < 0 else (CRITICAL if p == 0 else IRRELEVANT)
    return Classification(label=label, p=p, K=term.total_power)


@dataclass(frozen=True)
class PDEReport:
    """Per-term classifications plus the aggregate label."""

    per_term: tuple  # of (NonlinearTerm, Classification)
    aggregate: str

    def describe(self):
        return {
            "aggregate": self.aggregate,
            "terms": [
                {**t.describe(), "p": c.p, "K": c.K, "label": c.label}
                for t, c in self.per_term
            ],
        }


def classify_pde(spec):
    """Classify every term of a PDESpec and aggregate.

    One relevant term makes the aggregate relevant (it destroys the
    small-data decay hypothesis); otherwise one critical term makes it
    critical; an empty nonlinearity is vacuously irrelevant.
    """
    per_term = tuple((t, classify_term(t, spec.n, spec.d)) for t in spec.terms)
    labels = {c.label for _, c in per_term}
    if RELEVANT in labels:
        aggregate = RELEVANT
    elif CRITICAL in labels:
        aggregate = CRITICAL
    else:
        aggregate = IRRELEVANT
    return PDEReport(per_term=per_term, aggregate=aggregate)


@dataclass(frozen=True)
class RatePrediction:
    """Predicted asymptotic decay/remainder exponents, when available."""

    has_prediction: bool
    decay_exponent: Fraction = None
    remainder_exponent: Fraction = None
    frame: ScalingFrame = None
    reason: str = ""

    def describe(self):
        if not self.has_prediction:
            return {"has_prediction": False, "reason": self.reason}
        return {
            "has_prediction": True,
            "decay_exponent": [self.decay_exponent.numerator, self.decay_exponent.denominator],
            "remainder_exponent": [
                self.remainder_exponent.numerator,
                self.remainder_exponent.denominator,
            ],
            "frame": self.frame.describe(),
        }


def _is_ch_relevant_d1(spec, report):
    """Quadratic, doubly-differentiated relevant terms in n=2, d=1.

    This is the conservative second-order structure for which the shifted
    beta = 1/2 frame makes the relevant term exactly marginal and the first
    moment is the conserved amplitude.
    """
    if spec.n != 2 or spec.d != 1:
        return False
    relevant = [(t, c) for t, c in report.per_term if c.label == RELEVANT]
    if not relevant:
        return False
    return all(
        c.p == -1 and c.K == 2 and t.total_derivatives == 2 for t, c in relevant
    )


def predicted_rates(spec):
    """Predicted sup-norm decay and remainder exponents for a PDESpec.

    Irrelevant/critical aggregates decay like t^{-d/2n} with remainder
    t^{-(d+1)/2n} in the default frame.  The only relevant case with a
    worked-out prediction is the d = 1 Cahn-Hilliard structure (decay 1/2,
    remainder 3/4, frame beta = 1/2); all other relevant nonlinearities get
    an explicit no-prediction marker rather than a guess.
    """
    report = classify_pde(spec)
    n, d = spec.n, spec.d
    if report.aggregate in (IRRELEVANT, CRITICAL):
        return RatePrediction(
            has_prediction=True,
            decay_exponent=Fraction(d, 2 * n),
            remainder_exponent=Fraction(d + 1, 2 * n),
            frame=ScalingFrame.default(n, d),
        )
    if _is_ch_relevant_d1(spec, report):
        return RatePrediction(
            has_prediction=True,
            decay_exponent=Fraction(1, 2),
            remainder_exponent=Fraction(3, 4),
            frame=ScalingFrame.ch_relevant_d1(),
        )
    return RatePrediction(
        has_prediction=False,
        reason="relevant nonlinearity outside the d=1 Cahn-Hilliard structure; "
               "no decay prediction is available",
    )


def cahn_hilliard_spec(d):
    """Monomial expansion of the Cahn-Hilliard nonlinearity in dimension d.

    With u = 3^{-1/2} + w the equation becomes
    dw/dt = -Lap^2 w + sqrt(3) Lap(w^2) + Lap(w^3); expanding the Laplacians
    gives, per axis i, terms w d_i^2 w and (d_i w)^2 from the quadratic part
    and w^2 d_i^2 w and w (d_i w)^2 from the cubic part.
    """
    sqrt3 = 3.0 ** 0.5

    def axis_index(i, order):
        orders = [0] * d
        orders[i] = order
        return MultiIndex(tuple(orders))

    zero = MultiIndex((0,) * d)
    terms = []
    for i in range(d):
        e2 = axis_index(i, 2)
        e1 = axis_index(i, 1)
        terms.append(NonlinearTerm(2.0 * sqrt3, ((zero, 1), (e2, 1))))
        terms.append(NonlinearTerm(2.0 * sqrt3, ((e1, 2),)))
        terms.append(NonlinearTerm(3.0, ((zero, 2), (e2, 1))))
        terms.append(NonlinearTerm(6.0, ((zero, 1), (e1, 2))))
    return PDESpec(n=2, d=d, terms=tuple(terms))
