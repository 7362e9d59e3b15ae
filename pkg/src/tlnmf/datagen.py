"""Seeded synthetic datasets: Gaussian composite model and two-note music signals.

Random stream layout for :func:`gen_gcm` (one ``numpy.random.Generator``
seeded with ``spec.seed``):

1. ``M * K_bar`` Gamma draws filling W_bar column by column,
2. ``K_bar * N`` Gamma draws filling H_bar column by column,
3. for s = 1..S, ``M * N`` standard normal draws filling the transformed
   noise X^(s) column by column.

When ``noise_seed`` is set, step 3 uses its own generator instead, so that
realizations can be re-drawn while keeping W_bar and H_bar fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, GroundTruth, RealizationSet


@dataclass(frozen=True)
class GcmSpec:
    M: int = 10
    N: int = 50
    K_bar: int = 5
    a: float = 1.0
    theta: float = 2.0
    S: int = 1
    seed: int = 0
    noise_seed: int | None = None

    def validate(self):
        if self.M < 2 or self.N < 1 or self.S < 1:
            raise ConfigError(f"invalid dims M={self.M}, N={self.N}, S={self.S}")
        if not 1 <= self.K_bar <= min(self.M, self.N):
            raise ConfigError(f"K_bar={self.K_bar} must lie in [1, min(M, N)]")
        if not (self.a > 0 and self.theta > 0):
            raise ConfigError("Gamma shape and scale must be positive")
        return self


@dataclass(frozen=True)
class NotesSpec:
    T: int = 15000
    f0: float = 5000.0
    freqs: tuple = (440.0, 466.16)
    R: int = 2
    frame_len: int = 200
    hop: int = 100
    S: int = 1
    seed: int = 0
    envelope: str = "schedule"  # or "constant"
    ramp: float = 0.01  # seconds
    phases: tuple | None = None  # fixed phases instead of random ones

    def validate(self):
        if self.frame_len % 2 or self.frame_len < 2:
            raise ConfigError("frame_len must be even and >= 2")
        if self.frame_len > self.T:
            raise ConfigError("frame_len exceeds signal length")
        if not 1 <= self.hop <= self.frame_len:
            raise ConfigError("hop must lie in [1, frame_len]")
        if self.S < 1 or self.R < 1 or not self.freqs:
            raise ConfigError("S, R and the note list must be nonempty")
        if self.envelope not in ("schedule", "constant"):
            raise ConfigError(f"unknown envelope {self.envelope!r}")
        return self


def dct2_matrix(M):
    """Orthonormal type-II DCT matrix, rows are frequencies."""
    if M < 2:
        raise ConfigError("M must be >= 2")
    k = np.arange(M)[:, None]
    m = np.arange(M)[None, :]
    phi = np.cos(np.pi * (m + 0.5) * k / M) * math.sqrt(2.0 / M)
    phi[0] = math.sqrt(1.0 / M)
    return phi


def _fill_columns(values, rows, cols):
    return values.reshape(cols, rows).T


def gen_gcm(spec: GcmSpec):
    """Draw a GCM dataset with a DCT ground-truth transform.

    Returns
    -------
    data : RealizationSet
    truth : GroundTruth
    """
    spec.validate()
    M, N, K = spec.M, spec.N, spec.K_bar
    rng = np.random.default_rng(spec.seed)
    w_bar = _fill_columns(rng.gamma(spec.a, spec.theta, size=M * K), M, K)
    h_bar = _fill_columns(rng.gamma(spec.a, spec.theta, size=K * N), K, N)
    phi_bar = dct2_matrix(M)
    power = w_bar @ h_bar

    noise_rng = rng if spec.noise_seed is None else np.random.default_rng(spec.noise_seed)
    std = np.sqrt(power)
    Y = np.empty((spec.S, M, N))
    for s in range(spec.S):
        X = std * _fill_columns(noise_rng.standard_normal(M * N), M, N)
        Y[s] = phi_bar.T @ X

    sigmas = np.einsum("km,kn,kj->nmj", phi_bar, power, phi_bar)
    truth = GroundTruth(phi_bar=phi_bar, w_bar=w_bar, h_bar=h_bar, sigmas_true=sigmas)
    meta = dict(dataset="gcm", **spec.__dict__)
    return RealizationSet(Y, meta=meta), truth


def _activity(T, f0, intervals, ramp):
    """Unit-plateau envelope with raised-cosine ramps at interior on/off edges."""
    t = np.arange(T) / f0
    g = np.zeros(T)
    width = ramp
    for start, stop in intervals:
        on = (t >= start) & (t < stop)
        g[on] = 1.0
        if start > 0:
            rise = (t >= start) & (t < start + width)
            g[rise] = 0.5 - 0.5 * np.cos(np.pi * (t[rise] - start) / width)
        if stop < T / f0:
            fall = (t >= stop - width) & (t < stop)
            g[fall] = 0.5 + 0.5 * np.cos(np.pi * (t[fall] - (stop - width)) / width)
    return g


def note_envelopes(spec: NotesSpec):
    """Envelopes of the notes: one alone per second, then all together."""
    n_notes = len(spec.freqs)
    if spec.envelope == "constant":
        return np.ones((n_notes, spec.T))
    dur = spec.T / spec.f0
    if n_notes == 2:
        schedule = [[(0.0, 1.0), (2.0, dur)], [(1.0, dur)]]
    else:
        # generic: note i alone during slot i, all together in the last slot
        slot = dur / (n_notes + 1)
        schedule = [[(i * slot, (i + 1) * slot), (n_notes * slot, dur)] for i in range(n_notes)]
    return np.stack([_activity(spec.T, spec.f0, iv, spec.ramp) for iv in schedule])


def frame_signal(y, frame_len, hop):
    """Frames of ``y`` as columns, rectangular window, no padding."""
    n_frames = 1 + (len(y) - frame_len) // hop
    idx = np.arange(frame_len)[:, None] + hop * np.arange(n_frames)[None, :]
    return y[idx]


def synth_notes(spec: NotesSpec, phases):
    """Time signal for one realization given note phases."""
    t = np.arange(spec.T)
    env = note_envelopes(spec)
    y = np.zeros(spec.T)
    for i, f in enumerate(spec.freqs):
        base = 2 * np.pi * f / spec.f0 * t + phases[i]
        for r in range(1, spec.R + 1):
            y += 0.5**r * np.cos(r * base) * env[i]
    return y


def gen_notes(spec: NotesSpec):
    """Framed two-note signals with random note phases per realization."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    frames = []
    for _ in range(spec.S):
        if spec.phases is None:
            phases = rng.uniform(0.0, 2 * np.pi, size=len(spec.freqs))
        else:
            phases = np.asarray(spec.phases, dtype=float)
        frames.append(frame_signal(synth_notes(spec, phases), spec.frame_len, spec.hop))
    meta = dict(dataset="notes", **{k: v for k, v in spec.__dict__.items()})
    return RealizationSet(np.stack(frames), meta=meta)
