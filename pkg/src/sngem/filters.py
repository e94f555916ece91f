"""Filter frequency responses and their inverses.

The second acquisition channel is the signal seen through a known filter.
Each steady-state tone at frequency ``f`` is scaled by the complex gain
``beta(f) = A(f) exp(j Phi(f))``.  Because ``A`` is strictly monotone on the
filter band, the gain can be mapped back to ``f`` without any reference to
the sampling rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmplitudeOutOfRange,
    FrequencyOutOfBand,
    NonPositiveFrequency,
    ValidationError,
)

DIFF = "diff"
BUTTERWORTH_HP1 = "butterworth_hp1"

DIFF_DEFAULT_BAND = (0.0, 1e12)
INVERT_EPS = 1e-9


@dataclass(frozen=True)
class FilterResponse:
    """Immutable filter description.

    ``variant`` is ``"diff"`` (ideal differentiator, beta = j 2 pi f) or
    ``"butterworth_hp1"`` (first-order high-pass with cutoff ``fc``).
    ``band`` is the closed interval on which inversion is trusted.
    """

    variant: str
    band: tuple[float, float] = DIFF_DEFAULT_BAND
    fc: float | None = None

    def __post_init__(self):
        lo, hi = (float(b) for b in self.band)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or lo >= hi:
            raise ValidationError(f"invalid filter band {self.band!r}")
        object.__setattr__(self, "band", (lo, hi))
        if self.variant == DIFF:
            if self.fc is not None:
                raise ValidationError("differentiator takes no cutoff")
        elif self.variant == BUTTERWORTH_HP1:
            if self.fc is None or not (math.isfinite(self.fc) and self.fc > 0):
                raise ValidationError(f"butterworth cutoff must be positive, got {self.fc!r}")
            if lo <= 0:
                raise ValidationError("butterworth band must have f_lo > 0")
            object.__setattr__(self, "fc", float(self.fc))
        else:
            raise ValidationError(f"unknown filter variant {self.variant!r}")

    @property
    def descriptor(self) -> str:
        return format_descriptor(self)

    def in_band(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        lo, hi = self.band
        return (f > 0) & (f >= lo) & (f <= hi)


def ideal_differentiator(band: tuple[float, float] = DIFF_DEFAULT_BAND) -> FilterResponse:
    return FilterResponse(DIFF, band)


def butterworth_hp1(fc: float, band: tuple[float, float]) -> FilterResponse:
    return FilterResponse(BUTTERWORTH_HP1, band, fc)


def response(filt: FilterResponse, f):
    """Complex gain of ``filt`` at frequency ``f`` (scalar or array, Hz).

    Raises FrequencyOutOfBand if any frequency lies outside the band.
    """
    f_arr = np.asarray(f, dtype=float)
    if not np.all(filt.in_band(f_arr)):
        bad = f_arr[~filt.in_band(f_arr)]
        raise FrequencyOutOfBand(
            f"frequency {bad.ravel()[0]!r} Hz outside band {filt.band} of {filt.descriptor}"
        )
    if filt.variant == DIFF:
        beta = 2j * np.pi * f_arr
    else:
        r = f_arr / filt.fc
        beta = 1j * r / (1 + 1j * r)
    if np.ndim(f) == 0:
        return complex(beta)
    return beta


def invert(filt: FilterResponse, lam: complex, eps: float = INVERT_EPS) -> tuple[float, float]:
    """Map a generalized eigenvalue back to a frequency.

    Returns ``(f, residual)``.  The frequency comes from the amplitude of
    ``lam``; the residual measures disagreement with the phase of ``lam``
    and is informational only.
    """
    lam = complex(lam)
    mag = abs(lam)
    if mag == 0 or not math.isfinite(mag):
        raise NonPositiveFrequency(f"cannot invert eigenvalue {lam!r}")

    if filt.variant == DIFF:
        f = lam.imag / (2 * math.pi)
        residual = abs(lam.real) / mag
    else:
        if mag >= 1 - eps:
            raise AmplitudeOutOfRange(
                f"|lambda| = {mag!r} not below 1 - {eps:g} for {filt.descriptor}"
            )
        f = filt.fc * mag / math.sqrt((1 - mag) * (1 + mag))
        f_phase = filt.fc * math.tan(math.pi / 2 - math.atan2(lam.imag, lam.real))
        residual = abs(f - f_phase) / f if f > 0 else math.inf

    lo, hi = filt.band
    # rounding may push a band-edge tone a few ulps outside the band
    if not f > 0 or not (lo * (1 - eps) <= f <= hi * (1 + eps)):
        raise NonPositiveFrequency(
            f"eigenvalue {lam!r} maps to f = {f!r} Hz, outside band {filt.band}"
        )
    return f, residual


def format_descriptor(filt: FilterResponse) -> str:
    if filt.variant == DIFF:
        if filt.band == DIFF_DEFAULT_BAND:
            return "diff"
        return f"diff:band={filt.band[0]!r},{filt.band[1]!r}"
    return f"butterworth_hp1:fc={filt.fc!r}:band={filt.band[0]!r},{filt.band[1]!r}"


def parse_descriptor(text: str) -> FilterResponse:
    """Parse ``diff`` or ``butterworth_hp1:fc=<Hz>:band=<flo>,<fhi>``."""
    parts = [p.strip() for p in text.strip().split(":")]
    kind, fields = parts[0], {}
    for p in parts[1:]:
        key, sep, value = p.partition("=")
        if not sep:
            raise ValidationError(f"bad filter field {p!r} in {text!r}")
        fields[key.strip()] = value.strip()
    try:
        band = None
        if "band" in fields:
            lo, hi = fields.pop("band").split(",")
            band = (float(lo), float(hi))
        if kind == DIFF:
            if fields:
                raise ValidationError(f"unexpected fields {sorted(fields)} for diff")
            return ideal_differentiator(band or DIFF_DEFAULT_BAND)
        if kind == BUTTERWORTH_HP1:
            fc = float(fields.pop("fc"))
            if band is None:
                raise ValidationError("butterworth_hp1 requires band=<flo>,<fhi>")
            if fields:
                raise ValidationError(f"unexpected fields {sorted(fields)} for butterworth_hp1")
            return butterworth_hp1(fc, band)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"cannot parse filter descriptor {text!r}: {exc}") from exc
    raise ValidationError(f"unknown filter {kind!r}")
