"""Chirp (linear FM) parameter estimation from signal + derivative windows.

For ``y(t) = a exp(j(k t^2 + 2 pi f t + phi0))`` the derivative Hankel
satisfies ``Ydot = j2k * Y_H + j2 pi f * Y`` exactly, where ``Y_H`` is the
Hankel of ``t_k y_k``.  The two-parameter pencil is fitted jointly over all
windows by linear least squares; amplitude and phase then follow from a
scalar ratio against the unit-amplitude reference chirp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateWindows, InsufficientSamples, ValidationError, ZeroReference
from .pencil import build_hankel
from .signal_model import (
    SPEED_OF_LIGHT,
    ChirpSpec,
    DualChannelRecord,
    SamplingGrid,
    synth_chirp,
    synth_chirp_derivative,
    wrap_phase,
)

NORMAL_COND_MAX = 1e12


@dataclass
class ChirpWindow:
    grid: SamplingGrid
    y: np.ndarray
    ydot: np.ndarray
    n: int | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        self.ydot = np.asarray(self.ydot, dtype=complex)
        count = self.grid.count
        if self.y.shape != (count,) or self.ydot.shape != (count,):
            raise ValidationError("window channels must match the grid length")
        if self.n is None:
            self.n = (count + 1) // 2
        if 2 * self.n - 1 > count:
            raise InsufficientSamples(f"pencil size {self.n} needs {2 * self.n - 1} samples, have {count}")

    @classmethod
    def from_record(cls, record: DualChannelRecord, n: int | None = None) -> "ChirpWindow":
        return cls(record.grid, record.x, record.psi, n)

    @classmethod
    def synthesize(cls, spec: ChirpSpec, grid: SamplingGrid, n: int | None = None) -> "ChirpWindow":
        return cls(grid, synth_chirp(spec, grid), synth_chirp_derivative(spec, grid), n)


@dataclass(frozen=True)
class LosScenario:
    carrier_hz: float
    angle_deg: float = 0.0
    c_mps: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not (math.isfinite(self.carrier_hz) and self.carrier_hz > 0):
            raise ValidationError(f"carrier frequency must be positive, got {self.carrier_hz!r}")


@dataclass(frozen=True)
class TwoParamFit:
    lambda_l: complex
    mu_l: complex
    residual: float
    normal_cond: float

    @property
    def k(self) -> float:
        return self.lambda_l.imag / 2

    @property
    def f(self) -> float:
        return self.mu_l.imag / (2 * math.pi)


@dataclass
class ChirpEstimate:
    k: float
    f: float
    a: float
    phi0: float
    fit_residual: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, scenario: LosScenario | None = None) -> dict:
        out = {
            "k_rad_s2": self.k,
            "f_hz": self.f,
            "amp": self.a,
            "phase_rad": self.phi0,
            "fit_residual": self.fit_residual,
        }
        if scenario is not None:
            v, acc = doppler_to_motion(self.f, self.k, scenario)
            out["kinematics"] = {"v_mps": v, "a_mps2": acc, "angle_deg": scenario.angle_deg}
        return out


def build_yh(y, grid: SamplingGrid, n: int) -> np.ndarray:
    """Hankel of ``t_k * y_k`` on absolute sample instants."""
    y = np.asarray(y, dtype=complex)
    if y.shape[0] < 2 * n - 1:
        raise InsufficientSamples(f"need {2 * n - 1} samples for an {n}x{n} Hankel, got {y.shape[0]}")
    return build_hankel(grid.times[: y.shape[0]] * y, n)


def solve_two_param(windows: Sequence[ChirpWindow]) -> TwoParamFit:
    """Joint least-squares fit of ``Ydot = lambda_L Y_H + mu_L Y`` over windows."""
    if not windows:
        raise ValidationError("at least one window is required")
    cols, rhs = [], []
    for w in windows:
        Y = build_hankel(w.y, w.n)
        YH = build_yh(w.y, w.grid, w.n)
        Yd = build_hankel(w.ydot, w.n)
        cols.append(np.column_stack([YH.ravel(), Y.ravel()]))
        rhs.append(Yd.ravel())
    A = np.vstack(cols)
    b = np.concatenate(rhs)

    normal = A.conj().T @ A
    normal_cond = float(np.linalg.cond(normal))
    if not np.isfinite(normal_cond) or normal_cond > NORMAL_COND_MAX:
        raise DegenerateWindows(
            f"normal-equation condition {normal_cond:.3e} exceeds {NORMAL_COND_MAX:g}; "
            "windows too short to separate Y_H from Y"
        )
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    bnorm = np.linalg.norm(b)
    residual = float(np.linalg.norm(b - A @ sol) / bnorm) if bnorm > 0 else 0.0
    return TwoParamFit(complex(sol[0]), complex(sol[1]), residual, normal_cond)


def chirp_reference(k: float, f: float, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.exp(1j * (k * t * t + 2 * np.pi * f * t))


def amp_phase_chirp(y, k: float, f: float, grid) -> complex:
    """Least-squares ratio of ``y`` to the unit reference chirp.

    ``grid`` is a SamplingGrid or an explicit array of sample instants.
    """
    y = np.asarray(y, dtype=complex)
    t = grid.times if isinstance(grid, SamplingGrid) else np.asarray(grid, dtype=float)
    ref = chirp_reference(k, f, t[: y.shape[0]])
    energy = float(np.sum(np.abs(ref) ** 2))
    if energy == 0:
        raise ZeroReference("reference chirp has zero energy")
    return complex(np.vdot(ref, y) / energy)


def estimate_chirp(windows: Sequence[ChirpWindow]) -> ChirpEstimate:
    fit = solve_two_param(windows)
    y = np.concatenate([w.y for w in windows])
    t = np.concatenate([w.grid.times for w in windows])
    lam_ap = amp_phase_chirp(y, fit.k, fit.f, t)
    diag = {
        "re_lambda_l": abs(fit.lambda_l.real),
        "re_mu_l": abs(fit.mu_l.real),
        "normal_condition": fit.normal_cond,
        "windows": len(windows),
    }
    return ChirpEstimate(fit.k, fit.f, abs(lam_ap), wrap_phase(np.angle(lam_ap)),
                         fit.residual, diag)


def doppler_to_motion(f: float, k: float, scenario: LosScenario) -> tuple[float, float]:
    """Line-of-sight velocity and acceleration from Doppler offset and chirp rate."""
    v = scenario.c_mps * f / scenario.carrier_hz
    acc = scenario.c_mps * (k / math.pi) / scenario.carrier_hz
    return v, acc


def gnss_windows(spec: ChirpSpec, window_s: float = 500e-6, samples: int = 64,
                 count: int = 2, t0: float = 0.0) -> list[ChirpWindow]:
    """Back-to-back equal windows of ``samples`` points each."""
    dt = window_s / samples
    return [
        ChirpWindow.synthesize(spec, SamplingGrid(t0 + i * window_s, dt, samples))
        for i in range(count)
    ]
