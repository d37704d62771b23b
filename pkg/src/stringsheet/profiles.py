"""Chiral data: smooth, compactly supported complex profiles of one cone variable.

A profile is a finite sum of C-infinity bump terms

    amplitude * exp(1 - 1/(1 - u**2)),   u = (xi - center)/width, |u| < 1,

and exactly zero elsewhere.  Compact support makes "identically zero on an
interval" exactly representable in floating point, which the finite-duration
cusp construction relies on.  Profiles are immutable value objects; any module
that takes a profile also accepts a plain callable xi -> complex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BumpTerm:
    center: float
    width: float
    amplitude: complex


@dataclass(frozen=True)
class ChiralProfile:
    """Sum of bump terms, callable on scalars or arrays."""

    terms: tuple[BumpTerm, ...]

    def __call__(self, xi):
        return evaluate(self, xi)

    @property
    def support(self):
        """Smallest closed interval containing all nonzero terms, or None."""
        live = [t for t in self.terms if t.amplitude != 0]
        if not live:
            return None
        return (min(t.center - t.width for t in live),
                max(t.center + t.width for t in live))

    @property
    def vanishes_identically(self) -> bool:
        return self.support is None

    def is_zero_on(self, lo: float, hi: float) -> bool:
        """Exact vanishing on [lo, hi], decided from term supports."""
        return all(
            t.amplitude == 0 or t.center + t.width <= lo or t.center - t.width >= hi
            for t in self.terms
        )


def make_bump(center: float, width: float, amplitude: complex) -> ChiralProfile:
    """Single bump supported exactly on [center - width, center + width].

    Peak value is `amplitude`, attained at xi = center.
    """
    if not width > 0:
        raise ValueError(f"bump width must be positive, got {width}")
    return ChiralProfile((BumpTerm(float(center), float(width), complex(amplitude)),))


def make_gapped_pair(gap_half_width: float, outer_amplitude: complex):
    """Pair of profiles vanishing identically on [-b, b], b = gap_half_width.

    Each profile carries one bump on either side of the gap, supported on
    [b, 1.6b] and [-1.6b, -b] (centers +-1.3b, width 0.3b).  The support
    starts exactly at the gap edge and the modest width keeps the edge slope
    steep enough that detected zero sets do not creep past the gap by a
    typical grid cell.  The left bump carries the opposite amplitude sign, so
    the cumulative rotation from the anchor at 0 has one sign on both sides
    and the two chiralities cannot cancel each other outside the gap region.
    """
    b = float(gap_half_width)
    if not b > 0:
        raise ValueError(f"gap half-width must be positive, got {gap_half_width}")
    amp = complex(outer_amplitude)
    terms = (BumpTerm(-1.3 * b, 0.3 * b, -amp), BumpTerm(1.3 * b, 0.3 * b, amp))
    profile = ChiralProfile(terms)
    return profile, profile


def evaluate(profile: ChiralProfile, xi):
    """Evaluate a profile; returns complex scalar for scalar input."""
    xi_arr = np.asarray(xi, dtype=float)
    out = np.zeros(xi_arr.shape, dtype=complex)
    for term in profile.terms:
        if term.amplitude == 0:
            continue
        u = (xi_arr - term.center) / term.width
        inside = np.abs(u) < 1.0
        if np.any(inside):
            w = 1.0 - u[inside] ** 2
            out[inside] += term.amplitude * np.exp(1.0 - 1.0 / w)
    if xi_arr.ndim == 0:
        return complex(out[()])
    return out


def profile_to_dicts(profile: ChiralProfile) -> list[dict]:
    """Serialize to the scenario-file bump list."""
    return [
        {"center": t.center, "width": t.width,
         "re": t.amplitude.real, "im": t.amplitude.imag}
        for t in profile.terms
    ]


def profile_from_dicts(items) -> ChiralProfile:
    """Build a profile from a scenario-file bump list."""
    terms = []
    for item in items:
        width = float(item["width"])
        if not width > 0:
            raise ValueError(f"bump width must be positive, got {width}")
        amp = complex(float(item.get("re", 0.0)), float(item.get("im", 0.0)))
        terms.append(BumpTerm(float(item["center"]), width, amp))
    return ChiralProfile(tuple(terms))
