"""Radial monomial algebra: fields as {exponent: coefficient} maps.

All bulk velocity and pressure profiles of the per-mode solver are finite
sums of (possibly negative, possibly log-free) powers of r, so products,
derivatives and definite integrals are exact.
"""

from __future__ import annotations

import math


def m_zero() -> dict:
    return {}


def m_add(*ds: dict) -> dict:
    out: dict = {}
    for d in ds:
        for p, c in d.items():
            out[p] = out.get(p, 0.0) + c
    return {p: c for p, c in out.items() if c != 0.0}


def m_scale(d: dict, s: float) -> dict:
    return {p: c * s for p, c in d.items()} if s != 0.0 else {}

def m_shift(d: dict, k: int) -> dict:
    """Multiply by r^k."""
    return {p + k: c for p, c in d.items()}


def m_diff(d: dict) -> dict:
    return {p - 1: c * p for p, c in d.items() if p != 0}


def m_mul(d1: dict, d2: dict) -> dict:
    out: dict = {}
    for p1, c1 in d1.items():
        for p2, c2 in d2.items():
            out[p1 + p2] = out.get(p1 + p2, 0.0) + c1 * c2
    return out


def m_eval(d: dict, r: float) -> float:
    return sum(c * r**p for p, c in d.items())


def m_eval_abs(d: dict, r: float) -> float:
    """Sum of absolute monomial magnitudes: the evaluation's backward-error
    scale at r."""
    return sum(abs(c) * r**p for p, c in d.items())


def m_int(d: dict, r0: float, r1: float) -> float:
    """Definite integral over [r0, r1]; exponent -1 integrates to log."""
    total = 0.0
    for p, c in d.items():
        if p == -1:
            total += c * math.log(r1 / r0)
        else:
            total += c * (r1 ** (p + 1) - r0 ** (p + 1)) / (p + 1)
    return total
