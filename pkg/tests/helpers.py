"""Shared spec generators for the test suite."""
from __future__ import annotations

import math

import numpy as np

from sngem.signal_model import MultiToneSpec, SamplingGrid


def circular_gap(freqs, fs: float) -> float:
    """Smallest circular distance between aliased normalized frequencies f/fs mod 1."""
    u = np.sort(np.mod(np.asarray(freqs, dtype=float) / fs, 1.0))
    if u.size < 2:
        return 1.0
    d = np.diff(np.concatenate([u, [u[0] + 1.0]]))
    return float(d.min())


def random_spec(rng, m: int, f_lo: float = 100.0, f_hi: float = 10000.0,
                a_lo: float = 0.5, a_hi: float = 2.0, min_rel_sep: float = 0.05) -> MultiToneSpec:
    """Random tones with pairwise relative frequency separation >= ``min_rel_sep``."""
    while True:
        f = np.sort(rng.uniform(f_lo, f_hi, m))
        if m == 1 or np.min(np.diff(f) / f[1:]) >= min_rel_sep:
            break
    a = rng.uniform(a_lo, a_hi, m)
    phi = rng.uniform(-math.pi, math.pi, m)
    return MultiToneSpec.from_tones(f, a, phi)


def random_rate(rng, freqs, lo: float, hi: float, min_gap: float = 0.05) -> float:
    """A sampling rate in [lo, hi] whose aliased tones stay ``min_gap`` apart on the circle."""
    while True:
        fs = float(rng.uniform(lo, hi))
        if circular_gap(freqs, fs) >= min_gap:
            return fs


def random_case(rng, m_max: int = 8):
    """Random (spec, grid) with n = 2m and a sub-Nyquist rate."""
    m = int(rng.integers(1, m_max + 1))
    spec = random_spec(rng, m)
    fs = random_rate(rng, spec.freqs, 200.0, 2000.0, min_gap=0.5 / (m + 1))
    n = 2 * m
    return spec, SamplingGrid.from_rate(fs, 2 * n - 1), n
