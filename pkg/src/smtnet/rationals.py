"""Exact rational literals shared by the network, dataset and result files."""

from fractions import Fraction
from numbers import Rational


def parse_rational(value) -> Fraction:
    """Convert a file literal to an exact Fraction.

    Strings may be ``"p/q"`` or decimal notation and are read exactly.
    Bare numbers are taken as binary doubles and cast without loss.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a numeric literal: {value!r}")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite literal: {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad rational literal {value!r}") from exc
    raise ValueError(f"not a numeric literal: {value!r}")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def parse_vector(values) -> tuple[Fraction, ...]:
    return tuple(parse_rational(v) for v in values)


def format_vector(values) -> list[str]:
    return [format_rational(v) for v in values]


def linf(values) -> Fraction:
    return max((abs(Fraction(v)) for v in values), default=Fraction(0))
