"""Hankel matrix-pencil estimation of multi-tone signals.

The signal channel ``x`` and the filtered channel ``psi`` share the same
aliased exponentials ``s_i = exp(j 2 pi f_i dt)``; only the per-component
weights differ, by the filter gain ``beta(f_i)``.  The generalized
eigenvalues of ``(Psi, X)`` are therefore the gains themselves, which do not
wrap with the sampling rate.  Frequencies come from inverting the filter,
and amplitudes/phases from a Rayleigh-quotient ratio against a unit-tone
Hankel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import filters
from .errors import (
    AllZeroSpectrum,
    DegenerateRayleighDenominator,
    EigenSolverFailure,
    EigenvalueCollision,
    IllConditionedBasis,
    InsufficientSamples,
    NumericalError,
    OrderCollapse,
    RankDeficientTruncation,
    ValidationError,
)
from .filters import FilterResponse
from .signal_model import DualChannelRecord, SamplingGrid, wrap_phase

RANK_FLOOR = 1e-14
COLLISION_TOL = 1e-10
RAYLEIGH_TOL = 1e-14
LSQ_COND_MAX = 1e12
SPURIOUS_AMP = 1e-12


# --- order strategies -----------------------------------------------------

@dataclass(frozen=True)
class Fixed:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError(f"fixed order must be a positive integer, got {self.m!r}")


@dataclass(frozen=True)
class RelThreshold:
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.eps < 1):
            raise ValidationError(f"relative threshold must lie in (0, 1), got {self.eps!r}")


@dataclass(frozen=True)
class LargestLogGap:
    pass


OrderStrategy = Union[Fixed, RelThreshold, LargestLogGap]


def parse_order(text: str) -> OrderStrategy:
    """Parse ``fixed:<m>``, ``relthresh:<eps>`` or ``gap``."""
    kind, _, arg = text.strip().partition(":")
    try:
        if kind == "fixed":
            return Fixed(int(arg))
        if kind == "relthresh":
            return RelThreshold(float(arg) if arg else 1e-8)
        if kind == "gap" and not arg:
            return LargestLogGap()
    except ValueError as exc:
        raise ValidationError(f"bad order strategy {text!r}: {exc}") from exc
    raise ValidationError(f"unknown order strategy {text!r}")


# --- result types ---------------------------------------------------------

@dataclass
class PencilSolution:
    singular_values: np.ndarray
    order: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are unit-norm u_i, shape (n, order)
    condition_diag: float


@dataclass(frozen=True)
class ToneEstimate:
    f: float
    a: float
    phi0: float
    inversion_residual: float

    @property
    def alpha(self) -> complex:
        return self.a * complex(math.cos(self.phi0), math.sin(self.phi0))


@dataclass(frozen=True)
class EstimatorOptions:
    """Knobs for :func:`estimate_multitone`.

    ``n`` defaults to ``(N + 1) // 2``.  ``svd_target`` selects the matrix
    whose SVD defines the truncation subspaces: ``"x"`` (the signal Hankel)
    or ``"stacked"`` (left subspace of ``[X, Psi]``, right of ``[X; Psi]``).
    """

    n: int | None = None
    order: OrderStrategy = field(default_factory=RelThreshold)
    amp_method: str = "eq17"
    svd_target: str = "x"

    def __post_init__(self):
        if self.amp_method not in ("eq17", "lsq"):
            raise ValidationError(f"unknown amplitude method {self.amp_method!r}")
        if self.svd_target not in ("x", "stacked"):
            raise ValidationError(f"unknown svd target {self.svd_target!r}")
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise ValidationError(f"pencil size must be a positive integer, got {self.n!r}")


@dataclass
class MultitoneResult:
    components: list[ToneEstimate]
    solution: PencilSolution
    warnings: list[str] = field(default_factory=list)
    failed: list[dict] = field(default_factory=list)

    def to_json(self, verbose: bool = True) -> dict:
        diag = {
            "order": self.solution.order,
            "pencil_condition": self.solution.condition_diag,
            "warnings": list(self.warnings),
        }
        if verbose:
            diag["singular_values"] = [float(s) for s in self.solution.singular_values]
        if self.failed:
            diag["failed_components"] = self.failed
        return {
            "components": [
                {"f_hz": c.f, "amp": c.a, "phase_rad": c.phi0,
                 "inversion_residual": c.inversion_residual}
                for c in self.components
            ],
            "diagnostics": diag,
        }


# --- building blocks ------------------------------------------------------

def build_hankel(samples, n: int) -> np.ndarray:
    """Square Hankel ``H[p, q] = samples[p + q]`` from the first ``2n - 1`` samples."""
    samples = np.asarray(samples)
    if n < 1:
        raise ValidationError(f"pencil size must be >= 1, got {n}")
    if samples.shape[0] < 2 * n - 1:
        raise InsufficientSamples(
            f"need {2 * n - 1} samples for an {n}x{n} Hankel, got {samples.shape[0]}"
        )
    idx = np.arange(n)[:, None] + np.arange(n)[None, :]
    return samples[idx]


def estimate_order(singular_values, strategy: OrderStrategy = RelThreshold()) -> int:
    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0 or sv[0] <= 0:
        raise AllZeroSpectrum("leading singular value is zero")
    if isinstance(strategy, Fixed):
        return strategy.m
    if isinstance(strategy, RelThreshold):
        return int(np.count_nonzero(sv > strategy.eps * sv[0]))
    if isinstance(strategy, LargestLogGap):
        if sv.size == 1:
            return 1
        logs = np.log(np.maximum(sv, np.finfo(float).tiny))
        return int(np.argmax(logs[:-1] - logs[1:])) + 1
    raise ValidationError(f"unknown order strategy {strategy!r}")


def reduce_pencil(X, Psi, m: int, svd_target: str = "x"):
    """Project the pencil onto its leading rank-``m`` subspaces.

    Returns ``(X_r, Psi_r, V_m, U_m)`` with ``X_r = U_m^H X V_m`` (diagonal of
    singular values when ``svd_target="x"``) and ``Psi_r = U_m^H Psi V_m``.
    """
    X = np.asarray(X, dtype=complex)
    Psi = np.asarray(Psi, dtype=complex)
    n = X.shape[0]
    if not 1 <= m <= n:
        raise RankDeficientTruncation(f"order {m} outside 1..{n}")
    if svd_target == "x":
        U, s, Vh = np.linalg.svd(X)
        if s[0] == 0 or s[m - 1] / s[0] < RANK_FLOOR:
            raise RankDeficientTruncation(
                f"sigma_{m}/sigma_1 = {s[m - 1] / s[0] if s[0] else 0:.3e} below {RANK_FLOOR:g}"
            )
        U_m = U[:, :m]
        V_m = Vh[:m].conj().T
        X_r = np.diag(s[:m]).astype(complex)
    else:
        U_m = np.linalg.svd(np.hstack([X, Psi]))[0][:, :m]
        V_m = np.linalg.svd(np.vstack([X, Psi]))[2][:m].conj().T
        X_r = U_m.conj().T @ X @ V_m
        sx = np.linalg.svd(X_r, compute_uv=False)
        if sx[0] == 0 or sx[-1] / sx[0] < RANK_FLOOR:
            raise RankDeficientTruncation("projected X is numerically singular")
    Psi_r = U_m.conj().T @ Psi @ V_m
    return X_r, Psi_r, V_m, U_m


def _gauge(u: np.ndarray) -> np.ndarray:
    u = u / np.linalg.norm(u)
    big = np.flatnonzero(np.abs(u) > 1e-12 * np.abs(u).max())
    first = u[big[0]]
    return u * (abs(first) / first)


def solve_reduced_gep(X_r, Psi_r, V_m=None):
    """Eigenpairs of the reduced pencil ``Psi_r w = lambda X_r w``.

    Eigenvectors are lifted by ``V_m`` (identity if omitted), normalised to
    unit norm and rotated so the first non-negligible entry is real positive.
    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns.
    """
    X_r = np.asarray(X_r, dtype=complex)
    Psi_r = np.asarray(Psi_r, dtype=complex)
    try:
        if np.count_nonzero(X_r - np.diag(np.diag(X_r))) == 0:
            M = Psi_r / np.diag(X_r)[:, None]
        else:
            M = np.linalg.solve(X_r, Psi_r)
        lam, W = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverFailure(str(exc)) from exc
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(W))):
        raise EigenSolverFailure("eigen-decomposition produced non-finite values")

    scale = np.abs(lam).max()
    if lam.size > 1:
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.diag(np.full(lam.size, np.inf))
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        if gaps[i, j] <= COLLISION_TOL * scale:
            raise EigenvalueCollision(
                f"eigenvalues {lam[i]!r} and {lam[j]!r} coincide within {COLLISION_TOL:g}"
            )

    U = W if V_m is None else np.asarray(V_m) @ W
    U = np.column_stack([_gauge(U[:, k]) for k in range(U.shape[1])])
    return lam, U


def unit_tone_hankel(f: float, grid: SamplingGrid, n: int) -> np.ndarray:
    """Rank-one Hankel of ``exp(j 2 pi f t_k)`` on the first ``2n - 1`` instants."""
    t = grid.times[: 2 * n - 1]
    return build_hankel(np.exp(2j * np.pi * f * t), n)


def amp_phase_eq17(X, f: float, u, grid: SamplingGrid) -> complex:
    """Complex amplitude ``a exp(j phi0)`` from a generalized eigenvector.

    Ratio of the Rayleigh quotients of ``X`` and of the unit-tone Hankel at
    ``f``, both evaluated at ``u``.  Invariant to any rescaling of ``u``.
    """
    X = np.asarray(X, dtype=complex)
    u = np.asarray(u, dtype=complex)
    n = X.shape[0]
    G = unit_tone_hankel(f, grid, n)
    num = u.conj() @ X @ u
    den = u.conj() @ G @ u
    if abs(den) <= RAYLEIGH_TOL * np.linalg.norm(G) * np.vdot(u, u).real:
        raise DegenerateRayleighDenominator(
            f"eigenvector nearly orthogonal to the tone subspace at f = {f!r} Hz"
        )
    return complex(num / den)


def amp_phase_lsq(x, freqs, grid: SamplingGrid) -> np.ndarray:
    """Least-squares complex amplitudes of known tones in ``x``."""
    x = np.asarray(x, dtype=complex)
    t = grid.times[: x.shape[0]]
    W = np.exp(2j * np.pi * np.outer(t, np.asarray(freqs, dtype=float)))
    cond = np.linalg.cond(W)
    if not np.isfinite(cond) or cond > LSQ_COND_MAX:
        raise IllConditionedBasis(f"tone basis condition number {cond:.3e} exceeds {LSQ_COND_MAX:g}")
    alpha, *_ = np.linalg.lstsq(W, x, rcond=None)
    return alpha


# --- full pipeline --------------------------------------------------------

def solve_pencil(x, psi, n: int, order: OrderStrategy = RelThreshold(),
                 svd_target: str = "x") -> tuple[PencilSolution, np.ndarray]:
    """Hankel pair -> order -> reduced pencil -> eigenpairs.

    Returns the solution and the signal Hankel ``X`` (needed for amplitudes).
    """
    X = build_hankel(np.asarray(x, dtype=complex), n)
    Psi = build_hankel(np.asarray(psi, dtype=complex), n)
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[0] == 0:
        raise OrderCollapse("signal channel is identically zero")
    m = estimate_order(sv, order)
    if m == 0:
        raise OrderCollapse("estimated order is zero")
    if m > n:
        raise RankDeficientTruncation(f"order {m} exceeds pencil size {n}")
    X_r, Psi_r, V_m, _ = reduce_pencil(X, Psi, m, svd_target)
    lam, U = solve_reduced_gep(X_r, Psi_r, V_m)
    xs = np.linalg.svd(X_r, compute_uv=False)
    sol = PencilSolution(sv, m, lam, U, float(xs[0] / xs[-1]))
    return sol, X


def estimate_multitone(record: DualChannelRecord, filt: FilterResponse | None = None,
                       options: EstimatorOptions | None = None) -> MultitoneResult:
    """Frequencies, amplitudes and phases of every tone in ``record``.

    Eigenvalues that cannot be mapped to an in-band frequency are listed in
    ``result.failed`` rather than dropped silently.
    """
    options = options or EstimatorOptions()
    filt = filt or record.filter
    grid = record.grid
    n = options.n or (grid.count + 1) // 2
    sol, X = solve_pencil(record.x, record.psi, n, options.order, options.svd_target)

    kept, warnings, failed = [], [], []
    for lam, u in zip(sol.eigenvalues, sol.eigenvectors.T):
        try:
            f, resid = filters.invert(filt, lam)
        except NumericalError as exc:
            failed.append({"eigenvalue": [lam.real, lam.imag], "reason": str(exc)})
            warnings.append(f"eigenvalue {lam:.6g} not invertible: {exc}")
            continue
        kept.append((f, resid, u))

    if options.amp_method == "eq17":
        alphas = [amp_phase_eq17(X, f, u, grid) for f, _, u in kept]
    else:
        used = 2 * n - 1
        alphas = list(amp_phase_lsq(record.x[:used], [f for f, _, _ in kept], grid)) if kept else []

    comps = [ToneEstimate(f, abs(al), wrap_phase(np.angle(al)), resid)
             for (f, resid, _), al in zip(kept, alphas)]
    comps.sort(key=lambda c: (c.f, -c.a))
    for a, b in zip(comps, comps[1:]):
        if abs(b.f - a.f) <= 1e-12 * max(abs(a.f), abs(b.f)):
            warnings.append(f"tie in frequency at {a.f!r} Hz broken by amplitude")
    if comps:
        amax = max(c.a for c in comps)
        for c in comps:
            if c.a <= SPURIOUS_AMP * amax:
                warnings.append(f"component at {c.f!r} Hz has negligible amplitude (spurious)")
    return MultitoneResult(comps, sol, warnings, failed)
