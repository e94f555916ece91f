"""Parametric signal descriptions and dual-channel synthesis.

All synthesis is evaluated at absolute sample instants, so an initial
phase always refers to ``t = 0`` regardless of where the sampling window
starts.  Filtering is modelled per component in steady state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import filters
from .errors import ValidationError, ZeroPowerSignal
from .filters import FilterResponse

# Reference GNSS kinematics are expressed in Mach / g multiples.
MACH_MPS = 340.3
G_MPS2 = 9.81
SPEED_OF_LIGHT = 299792458.0


def wrap_phase(phi):
    """Wrap angles to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    if np.ndim(phi) == 0:
        return float(wrapped)
    return wrapped


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ToneComponent:
    f: float
    a: float
    phi0: float = 0.0

    def __post_init__(self):
        f = _finite("f", self.f)
        a = _finite("a", self.a)
        if f <= 0:
            raise ValidationError(f"tone frequency must be positive, got {f!r}")
        if a < 0:
            raise ValidationError(f"tone amplitude must be non-negative, got {a!r}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "phi0", wrap_phase(_finite("phi0", self.phi0)))

    @property
    def alpha(self) -> complex:
        return self.a * complex(math.cos(self.phi0), math.sin(self.phi0))


@dataclass(frozen=True)
class MultiToneSpec:
    components: tuple[ToneComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValidationError("a multitone spec needs at least one component")
        freqs = [c.f for c in comps]
        if len(set(freqs)) != len(freqs):
            raise ValidationError("component frequencies must be pairwise distinct")
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([c.f for c in self.components])

    @property
    def amps(self) -> np.ndarray:
        return np.array([c.a for c in self.components])

    @property
    def phases(self) -> np.ndarray:
        return np.array([c.phi0 for c in self.components])

    @property
    def alphas(self) -> np.ndarray:
        return self.amps * np.exp(1j * self.phases)

    def scaled(self, freq_factor: float) -> "MultiToneSpec":
        return MultiToneSpec(tuple(
            ToneComponent(c.f * freq_factor, c.a, c.phi0) for c in self.components
        ))

    def to_dict(self) -> dict:
        return {"components": [{"f": c.f, "a": c.a, "phi0": c.phi0} for c in self.components]}

    @classmethod
    def from_tones(cls, freqs, amps, phases) -> "MultiToneSpec":
        return cls(tuple(ToneComponent(f, a, p) for f, a, p in zip(freqs, amps, phases)))


@dataclass(frozen=True)
class ChirpSpec:
    """Linear FM signal ``a exp(j(k t^2 + 2 pi f t + phi0))``; k in rad/s^2."""

    k: float
    f: float
    a: float = 1.0
    phi0: float = 0.0

    def __post_init__(self):
        for name in ("k", "f", "a"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.a < 0:
            raise ValidationError(f"chirp amplitude must be non-negative, got {self.a!r}")
        object.__setattr__(self, "phi0", wrap_phase(_finite("phi0", self.phi0)))

    def instantaneous_frequency(self, t):
        return self.f + (self.k / np.pi) * np.asarray(t, dtype=float)

    def to_dict(self) -> dict:
        return {"k": self.k, "f": self.f, "a": self.a, "phi0": self.phi0}


Spec = Union[MultiToneSpec, ChirpSpec]


@dataclass(frozen=True)
class SamplingGrid:
    t0: float
    dt: float
    count: int

    def __post_init__(self):
        t0 = _finite("t0", self.t0)
        dt = _finite("dt", self.dt)
        if dt <= 0:
            raise ValidationError(f"sample spacing must be positive, got {dt!r}")
        if int(self.count) != self.count or self.count < 3:
            raise ValidationError(f"sample count must be an integer >= 3, got {self.count!r}")
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def from_rate(cls, fs: float, count: int, t0: float = 0.0) -> "SamplingGrid":
        fs = _finite("fs", fs)
        if fs <= 0:
            raise ValidationError(f"sampling rate must be positive, got {fs!r}")
        return cls(t0, 1.0 / fs, count)

    @property
    def fs(self) -> float:
        return 1.0 / self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.count) * self.dt

    def shifted(self, tau: float) -> "SamplingGrid":
        return SamplingGrid(self.t0 + tau, self.dt, self.count)


@dataclass
class DualChannelRecord:
    """Synchronous samples of a signal and its filtered copy."""

    grid: SamplingGrid
    x: np.ndarray
    psi: np.ndarray
    filter_tag: str = "diff"
    noise_tag: float | str = "none"
    seed: int | None = None
    kind: str = "multitone"
    truth: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.psi = np.asarray(self.psi, dtype=complex)
        n = self.grid.count
        if self.x.shape != (n,) or self.psi.shape != (n,):
            raise ValidationError(
                f"channel lengths {self.x.shape}, {self.psi.shape} do not match grid count {n}"
            )
        if self.kind not in ("multitone", "chirp"):
            raise ValidationError(f"unknown record kind {self.kind!r}")

    @property
    def filter(self) -> FilterResponse:
        return filters.parse_descriptor(self.filter_tag)


def synth_multitone(spec: MultiToneSpec, grid: SamplingGrid) -> np.ndarray:
    t = grid.times
    phase = 2 * np.pi * np.outer(t, spec.freqs) + spec.phases
    return np.exp(1j * phase) @ spec.amps


def synth_filtered(spec: MultiToneSpec, filt: FilterResponse, grid: SamplingGrid) -> np.ndarray:
    beta = np.atleast_1d(filters.response(filt, spec.freqs))
    t = grid.times
    phase = 2 * np.pi * np.outer(t, spec.freqs) + spec.phases
    return np.exp(1j * phase) @ (beta * spec.amps)


def synth_chirp(spec: ChirpSpec, grid: SamplingGrid) -> np.ndarray:
    t = grid.times
    return spec.a * np.exp(1j * (spec.k * t * t + 2 * np.pi * spec.f * t + spec.phi0))


def synth_chirp_derivative(spec: ChirpSpec, grid: SamplingGrid) -> np.ndarray:
    t = grid.times
    return 1j * (2 * spec.k * t + 2 * np.pi * spec.f) * synth_chirp(spec, grid)


def add_noise(seq, snr_db: float | None, seed) -> np.ndarray:
    """Add circular complex white Gaussian noise at ``snr_db``.

    SNR is mean sample power over per-sample noise variance.  ``snr_db`` of
    None or +inf returns a copy unchanged.  ``seed`` is anything accepted by
    ``numpy.random.default_rng`` (an int or a sequence of ints).
    """
    seq = np.array(seq, dtype=complex)
    if snr_db is None or snr_db == math.inf:
        return seq
    if seq.size == 0:
        raise ValidationError("cannot add noise to an empty sequence")
    power = float(np.mean(np.abs(seq) ** 2))
    if power == 0:
        raise ZeroPowerSignal("signal has zero mean power; SNR is undefined")
    sigma = math.sqrt(power / 10 ** (snr_db / 10) / 2)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(seq.shape) + 1j * rng.standard_normal(seq.shape)
    return seq + sigma * noise


def make_record(
    spec: Spec,
    grid: SamplingGrid,
    filt: FilterResponse | None = None,
    snr_db: float | None = None,
    seed: int | Sequence[int] | None = None,
) -> DualChannelRecord:
    """Synthesize a dual-channel record, optionally with independent noise per channel."""
    filt = filt or filters.ideal_differentiator()
    if isinstance(spec, MultiToneSpec):
        kind = "multitone"
        x = synth_multitone(spec, grid)
        psi = synth_filtered(spec, filt, grid)
    elif isinstance(spec, ChirpSpec):
        if filt.variant != filters.DIFF:
            raise ValidationError("chirp records require the ideal differentiator")
        kind = "chirp"
        x = synth_chirp(spec, grid)
        psi = synth_chirp_derivative(spec, grid)
    else:
        raise ValidationError(f"unsupported spec type {type(spec).__name__}")

    if snr_db is not None and snr_db != math.inf:
        if seed is None:
            raise ValidationError("a seed is required when noise is added")
        base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
        x = add_noise(x, snr_db, base + [0])
        psi = add_noise(psi, snr_db, base + [1])
        noise_tag: float | str = float(snr_db)
    else:
        noise_tag = "none"

    record_seed = None
    if seed is not None and not isinstance(seed, (list, tuple)):
        record_seed = int(seed)
    return DualChannelRecord(grid, x, psi, filt.descriptor, noise_tag, record_seed,
                             kind, spec.to_dict())


def spec_from_dict(data: dict, kind: str | None = None) -> Spec:
    """Build a spec from its JSON form.

    Multitone: ``{"components": [{"f":..., "a":..., "phi0":...}, ...]}`` or a
    bare list of components.  Chirp: ``{"k":..., "f":..., "a":..., "phi0":...}``.
    Phases may be given in degrees as ``phi0_deg``.
    """
    def phase(d):
        if "phi0_deg" in d:
            return math.radians(float(d["phi0_deg"]))
        return float(d.get("phi0", 0.0))

    try:
        if isinstance(data, list):
            data = {"components": data}
        if kind is None:
            kind = "multitone" if "components" in data else "chirp"
        if kind == "multitone":
            comps = tuple(
                ToneComponent(float(c["f"]), float(c.get("a", 1.0)), phase(c))
                for c in data["components"]
            )
            return MultiToneSpec(comps)
        if kind == "chirp":
            return ChirpSpec(float(data["k"]), float(data["f"]), float(data.get("a", 1.0)), phase(data))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed {kind} spec: {exc!r}") from exc
    raise ValidationError(f"unknown spec kind {kind!r}")


# Reference 10-tone signal used throughout the desk experiments.
TABLE1_FREQS = (935.0, 957.0, 1297.0, 1317.5, 3120.0, 3135.0, 4460.0, 5530.0, 5970.0, 7990.0)
TABLE1_AMPS = (1.5, 3.5, 2.0, 0.1, 1.2, 0.8, 2.5, 0.8, 1.0, 0.3)
TABLE1_PHASES_DEG = (30, 50, 170, 230, 90, 145, 360, 330, 280, 360)


def table1_spec() -> MultiToneSpec:
    return MultiToneSpec.from_tones(
        TABLE1_FREQS, TABLE1_AMPS, [math.radians(p) for p in TABLE1_PHASES_DEG]
    )


def gnss_chirp(angle_deg: float = 0.0, carrier_hz: float = 1.5e9,
               speed_mps: float = 2 * MACH_MPS, accel_mps2: float = 20 * G_MPS2,
               c_mps: float = SPEED_OF_LIGHT) -> ChirpSpec:
    """Doppler chirp seen by a receiver moving along a line at ``angle_deg`` to the satellite."""
    cos_t = math.cos(math.radians(angle_deg))
    f = carrier_hz * speed_mps * cos_t / c_mps
    k = math.pi * carrier_hz * accel_mps2 * cos_t / c_mps
    return ChirpSpec(k, f, 1.0, 0.0)
