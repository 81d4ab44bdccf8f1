"""Exact rational parsing and rendering for T and M quantities."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

ZERO = Fraction(0)


def parse_rational(value: object) -> Fraction:
    """Parse a decimal literal, fraction string, int or Fraction exactly.

    Floats are rejected: a binary float has already lost the decimal value
    the user typed.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not quantities")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        raise TypeError(f"refusing inexact float {value!r}; pass a decimal string")
    if isinstance(value, str):
        text = value.strip()
        if not text:
            raise ValueError("empty quantity")
        try:
            return Fraction(text)
        except ValueError:
            raise ValueError(f"not an exact decimal or fraction: {value!r}") from None
    raise TypeError(f"unsupported quantity type {type(value).__name__}")


def _terminates(q: Fraction) -> bool:
    d = q.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def format_rational(q: Fraction) -> str:
    """Render exactly: terminating decimal where possible, else ``p/q``."""
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    if not _terminates(q):
        return f"{q.numerator}/{q.denominator}"
    sign = "-" if q < 0 else ""
    q = abs(q)
    digits = 0
    scaled = q
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    text = str(scaled.numerator).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"
