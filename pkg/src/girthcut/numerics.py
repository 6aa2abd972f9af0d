"""Floating-point scalars that carry a rigorous running bound on rounding error.

Every value is an MPFR float at a configurable mantissa width together with an
absolute error bound ``err``: the exact real-arithmetic quantity the scalar
stands for is guaranteed to lie in ``[value - err, value + err]``.  Each
arithmetic operation rounds the value to nearest at the working precision and
pushes the error bound outward by the propagated input errors plus a fresh
``u * |result|`` rounding term, where ``u = 2**(1 - mantissa_bits)`` is a safe
upper bound on the relative rounding error of a single operation.

The ``err`` field itself is a double kept as an upper bound at all times.  The
error expressions are sums and products of non-negative doubles, which
round-to-nearest can underestimate by at most a factor ``(1 - 2**-53)`` per
operation; a final multiplication by ``1 + 2**-48`` restores a strict upper
bound for any chain of up to thirty such operations (the longest rule below
uses ten).  Error bounds may overflow to ``+inf``; that simply means
certification is lost, and the value arithmetic continues unharmed.

Multiplication keeps the second-order ``a.err * b.err`` cross term, and
division uses the exact enclosure bound with the ``|b.value| - b.err``
denominator safeguard, so the enclosure contract holds unconditionally rather
than just to first order.
"""

from __future__ import annotations

import math
from fractions import Fraction

import gmpy2

__all__ = [
    "PrecisionContext",
    "TrackedScalar",
    "DegenerateDivisionError",
]

_INF = math.inf

# Restores a strict upper bound after <= 30 round-to-nearest ops on non-negative
# doubles (each can lose at most a relative 2**-53).
_ERR_SLACK = 1.0 + 2.0 ** -48


def _up(x: float) -> float:
    """Next float toward +inf; turns a round-to-nearest result into an upper bound."""
    return math.nextafter(x, _INF)


def _dn(x: float) -> float:
    return math.nextafter(x, -_INF)


class DegenerateDivisionError(ZeroDivisionError):
    """Raised when a divisor's error interval contains zero."""


class PrecisionContext:
    """Working precision plus the per-operation relative error bound it implies.

    ``mantissa_bits`` is the MPFR significand width.  ``unit_roundoff`` is
    ``2**(1 - mantissa_bits)``, a deliberately generous bound (a full machine
    epsilon rather than half of one) so the error rules stay simple and safe.
    """

    __slots__ = ("mantissa_bits", "unit_roundoff", "_ctx", "_ctx_down", "_ctx_up")

    MIN_BITS = 24
    MAX_BITS = 1000  # beyond this the float64 unit roundoff would underflow

    def __init__(self, mantissa_bits: int = 256):
        if not isinstance(mantissa_bits, int):
            raise TypeError("mantissa_bits must be an int")
        if not (self.MIN_BITS <= mantissa_bits <= self.MAX_BITS):
            raise ValueError(
                f"mantissa_bits must be in [{self.MIN_BITS}, {self.MAX_BITS}], "
                f"got {mantissa_bits}"
            )
        self.mantissa_bits = mantissa_bits
        self.unit_roundoff = math.ldexp(1.0, 1 - mantissa_bits)
        self._ctx = gmpy2.context(precision=mantissa_bits)
        self._ctx_down = gmpy2.context(precision=mantissa_bits, round=gmpy2.RoundDown)
        self._ctx_up = gmpy2.context(precision=mantissa_bits, round=gmpy2.RoundUp)

    def __repr__(self):
        return f"PrecisionContext(mantissa_bits={self.mantissa_bits})"

    def __eq__(self, other):
        return (
            isinstance(other, PrecisionContext)
            and other.mantissa_bits == self.mantissa_bits
        )

    def __hash__(self):
        return hash(("PrecisionContext", self.mantissa_bits))

    # -- constructors ------------------------------------------------------

    def scalar(self, value) -> "TrackedScalar":
        """Tracked scalar from an int, float, Fraction or decimal string.

        The error bound is zero when the value is exactly representable at
        this precision, else one unit roundoff of the rounded value.
        """
        if isinstance(value, str):
            value = Fraction(value)
        if isinstance(value, Fraction):
            q = gmpy2.mpq(value.numerator, value.denominator)
        else:
            q = gmpy2.mpq(value)  # ints, floats, mpfr: all exact as rationals
        v = gmpy2.mpfr(q, self.mantissa_bits)  # one correctly-rounded conversion
        err = 0.0 if gmpy2.mpq(v) == q else _up(self.unit_roundoff * abs(float(v)))
        return TrackedScalar(v, err, self)

    def exact(self, value) -> "TrackedScalar":
        """Tracked scalar asserted to be exactly representable (err = 0)."""
        s = self.scalar(value)
        if s.err != 0.0:
            raise ValueError(f"{value!r} is not exactly representable at "
                             f"{self.mantissa_bits} bits")
        return s

    @property
    def zero(self) -> "TrackedScalar":
        return TrackedScalar(gmpy2.mpfr(0, self.mantissa_bits), 0.0, self)

    @property
    def one(self) -> "TrackedScalar":
        return TrackedScalar(gmpy2.mpfr(1, self.mantissa_bits), 0.0, self)


class TrackedScalar:
    """An MPFR value with a running absolute-error upper bound.

    Immutable; all arithmetic returns new scalars.  Both operands of a binary
    operation must share the same PrecisionContext.
    """

    __slots__ = ("value", "err", "ctx")

    def __init__(self, value, err: float, ctx: PrecisionContext):
        if err < 0.0 or err != err:  # negative or NaN
            raise ValueError(f"invalid error bound {err!r}")
        self.value = value
        self.err = err
        self.ctx = ctx

    # -- interval endpoints (outward-rounded doubles) ----------------------

    def magnitude(self) -> float:
        """Upper bound on |value| as a double."""
        return _up(abs(float(self.value)))

    def lower(self) -> float:
        """Certified lower bound on the exact quantity, as a double."""
        return _dn(_dn(float(self.value)) - self.err)

    def upper(self) -> float:
        """Certified upper bound on the exact quantity, as a double."""
        return _up(_up(float(self.value)) + self.err)

    def excludes_zero(self) -> bool:
        """True when the error interval provably excludes zero."""
        return self.lower() > 0.0 or self.upper() < 0.0

    # -- arithmetic --------------------------------------------------------

    def _check(self, other: "TrackedScalar"):
        if self.ctx is not other.ctx and self.ctx != other.ctx:
            raise ValueError("operands use different precision contexts")

    def add(self, other: "TrackedScalar") -> "TrackedScalar":
        self._check(other)
        ctx = self.ctx
        v = ctx._ctx.add(self.value, other.value)
        e = (self.err + other.err
             + ctx.unit_roundoff * abs(float(v))) * _ERR_SLACK
        return TrackedScalar(v, e, ctx)

    def sub(self, other: "TrackedScalar") -> "TrackedScalar":
        self._check(other)
        ctx = self.ctx
        v = ctx._ctx.sub(self.value, other.value)
        e = (self.err + other.err
             + ctx.unit_roundoff * abs(float(v))) * _ERR_SLACK
        return TrackedScalar(v, e, ctx)

    def mul(self, other: "TrackedScalar") -> "TrackedScalar":
        self._check(other)
        ctx = self.ctx
        v = ctx._ctx.mul(self.value, other.value)
        e = (abs(float(self.value)) * other.err
             + abs(float(other.value)) * self.err
             + self.err * other.err
             + ctx.unit_roundoff * abs(float(v))) * _ERR_SLACK
        return TrackedScalar(v, e, ctx)

    def div(self, other: "TrackedScalar") -> "TrackedScalar":
        """Quotient with the |denominator| - err safeguard.

        For exact x in a +- ea and y in b +- eb with |b| > eb,
        |x/y - a/b| <= (ea + |a/b| * eb) / (|b| - eb); one more unit roundoff
        covers rounding of the computed quotient.
        """
        self._check(other)
        ctx = self.ctx
        d = _dn(_dn(abs(float(other.value))) - other.err)
        if not d > 0.0:
            raise DegenerateDivisionError(
                "divisor interval contains zero "
                f"(value={float(other.value)!r}, err={other.err!r})")
        v = ctx._ctx.div(self.value, other.value)
        qv = abs(float(v))
        # upper bound on |a/b|: covers the MPFR rounding (u) and the conversion
        # of v to double (2**-53) for any admissible precision
        q_hi = qv * (1.0 + 2.0 ** -51 + 2.0 * ctx.unit_roundoff)
        e = ((self.err + q_hi * other.err) / d
             + ctx.unit_roundoff * qv) * _ERR_SLACK
        return TrackedScalar(v, e, ctx)

    def neg(self) -> "TrackedScalar":
        return TrackedScalar(self.ctx._ctx.minus(self.value), self.err, self.ctx)

    def abs(self) -> "TrackedScalar":
        return TrackedScalar(abs(self.value), self.err, self.ctx)

    __add__ = add
    __sub__ = sub
    __mul__ = mul
    __truediv__ = div
    __neg__ = neg

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"TrackedScalar({self.value!r}, err={self.err:.3e})"

    def format(self, digits: int = 20) -> str:
        """Decimal rendering with the given number of significant digits."""
        return f"{self.value:.{digits}g}"


def tracked_sum(terms, ctx: PrecisionContext) -> TrackedScalar:
    """Left-fold sum of an iterable of TrackedScalars (zero for empty input)."""
    acc = None
    for t in terms:
        acc = t if acc is None else acc.add(t)
    return ctx.zero if acc is None else acc
