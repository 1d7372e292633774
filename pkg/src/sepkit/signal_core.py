"""Framing, windows, overlap-add, radix-2 DFT and the STFT/ISTFT pair."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DegenerateWindow, ShapeError, SignalTooShort, UnsupportedSize

DEFAULT_SAMPLE_RATE = 8000
DEFAULT_FFT_SIZE = 512
ENVELOPE_FLOOR = 1e-8
WINDOWS = ("hann", "sqrt_hann", "rect")


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        s = _readonly(self.samples)
        if s.ndim != 1:
            raise ShapeError(f"waveform samples must be 1-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains NaN or Inf")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)


@dataclass(frozen=True)
class MultichannelWaveform:
    """D equal-length channels stored as a (D, T) array."""

    data: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    reference_channel: int = 0

    def __post_init__(self):
        d = _readonly(self.data)
        if d.ndim == 1:
            d = _readonly(d[None, :])
        if d.ndim != 2 or d.shape[0] < 1:
            raise ShapeError(f"expected (channels, samples), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("waveform contains NaN or Inf")
        if not 0 <= self.reference_channel < d.shape[0]:
            raise ValueError(
                f"reference_channel {self.reference_channel} out of range for {d.shape[0]} channels")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def from_channels(cls, channels: Sequence[Waveform], reference_channel=0):
        if not channels:
            raise ShapeError("need at least one channel")
        rates = {c.sample_rate for c in channels}
        lengths = {len(c) for c in channels}
        if len(rates) != 1 or len(lengths) != 1:
            raise ShapeError("channels must share length and sample rate")
        return cls(np.stack([c.samples for c in channels]), rates.pop(), reference_channel)

    @property
    def num_channels(self):
        return self.data.shape[0]

    def __len__(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return [Waveform(row, self.sample_rate) for row in self.data]

    def reference(self) -> Waveform:
        return Waveform(self.data[self.reference_channel], self.sample_rate)


def as_samples(x) -> np.ndarray:
    """1-D float64 view of a Waveform or array-like."""
    if isinstance(x, Waveform):
        return x.samples
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"expected a 1-D signal, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class FrameSpec:
    window_len: int
    advance: int
    window: str = "sqrt_hann"

    def __post_init__(self):
        if not 0 < self.advance <= self.window_len:
            raise ValueError(
                f"need 0 < advance <= window_len, got {self.advance}/{self.window_len}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {WINDOWS}")

    def num_frames(self, n_samples):
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.advance + 1

    def covered_length(self, n_frames):
        return self.window_len + (n_frames - 1) * self.advance

    def window_values(self):
        return window(self.window, self.window_len)

    @classmethod
    def from_ms(cls, window_ms, advance_ms, sample_rate=DEFAULT_SAMPLE_RATE, window="sqrt_hann"):
        return cls(int(round(window_ms * sample_rate / 1000.0)),
                   int(round(advance_ms * sample_rate / 1000.0)), window)


PRESETS_MS = {"64/16": (64.0, 16.0), "4/2": (4.0, 2.0)}


def parse_frame(text: str, sample_rate=DEFAULT_SAMPLE_RATE, window="sqrt_hann") -> FrameSpec:
    """Parse ``"64/16"``, ``"4/2"`` or any ``"<window ms>/<advance ms>"``."""
    if text in PRESETS_MS:
        w_ms, s_ms = PRESETS_MS[text]
    else:
        try:
            w_str, s_str = text.split("/")
            w_ms, s_ms = float(w_str), float(s_str)
        except ValueError:
            raise ValueError(f"frame must look like '64/16' (ms/ms), got {text!r}") from None
    return FrameSpec.from_ms(w_ms, s_ms, sample_rate, window)


def window(kind: str, length: int) -> np.ndarray:
    """Periodic window; sqrt_hann squared sums to 1 at 50% overlap."""
    n = np.arange(length)
    if kind == "rect":
        return np.ones(length)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    if kind == "hann":
        return hann
    if kind == "sqrt_hann":
        return np.sqrt(hann)
    raise ValueError(f"unknown window {kind!r}")


@dataclass(frozen=True)
class FramedSignal:
    frames: np.ndarray
    spec: FrameSpec

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    frame_spec: FrameSpec
    fft_size: int
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def num_frames(self):
        return self.bins.shape[0]

    @property
    def num_features(self):
        return self.bins.shape[1]


def frame(signal, spec: FrameSpec) -> FramedSignal:
    x = as_samples(signal)
    if x.shape[0] < spec.window_len:
        raise SignalTooShort(
            f"signal has {x.shape[0]} samples, fewer than window length {spec.window_len}")
    n_frames = spec.num_frames(x.shape[0])
    idx = np.arange(n_frames)[:, None] * spec.advance + np.arange(spec.window_len)[None, :]
    return FramedSignal(x[idx], spec)


def edge_padding(n_samples: int, spec: FrameSpec):
    """Return ``(head, tail)`` zero padding that puts n_samples under full frame overlap.

    The head is one window; the tail is one window plus whatever completes the
    last frame. After padding, istft divides by a non-vanishing envelope at
    every original sample.
    """
    head = spec.window_len
    body = head + n_samples + spec.window_len
    frames = -(-(body - spec.window_len) // spec.advance) + 1
    return head, spec.covered_length(frames) - n_samples - head


def overlap_add(frames, spec: FrameSpec, out_len: int) -> np.ndarray:
    """Sum frames at their hop offsets; no normalization."""
    f = frames.frames if isinstance(frames, FramedSignal) else np.asarray(frames, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != spec.window_len:
        raise ShapeError(f"frames must be (L, {spec.window_len}), got {f.shape}")
    if f.shape[0] == 0:
        return np.zeros(out_len)
    return kernels.overlap_add_frames(np.ascontiguousarray(f, dtype=np.float64), spec.advance, out_len)


def _check_pow2(n):
    if n < 1 or n & (n - 1):
        raise UnsupportedSize(f"FFT size must be a power of two, got {n}")


def fft(x, inverse=False) -> np.ndarray:
    """Unnormalized complex radix-2 FFT along the last axis (1-D or 2-D input)."""
    a = np.asarray(x, dtype=np.complex128)
    _check_pow2(a.shape[-1])
    flat = a.reshape(-1, a.shape[-1])
    return kernels.fft_batch(flat, inverse).reshape(a.shape)


def dft(v) -> np.ndarray:
    """One-sided spectrum of real frames (last axis), bins 0..N/2."""
    a = np.asarray(v, dtype=np.float64)
    n = a.shape[-1]
    return fft(a)[..., : n // 2 + 1]


def idft(spectrum, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`dft`: conjugate-symmetric extension, then inverse FFT."""
    s = np.asarray(spectrum, dtype=np.complex128)
    if n is None:
        n = 2 * (s.shape[-1] - 1)
    if s.shape[-1] != n // 2 + 1:
        raise ShapeError(f"one-sided spectrum of size {n} needs {n // 2 + 1} bins, got {s.shape[-1]}")
    full = np.concatenate((s, np.conj(s[..., n // 2 - 1:0:-1])), axis=-1)
    return fft(full, inverse=True).real / n


def stft(signal, spec: FrameSpec, fft_size: int = DEFAULT_FFT_SIZE) -> ComplexSpectrogram:
    _check_pow2(fft_size)
    if fft_size < spec.window_len:
        raise ShapeError(f"fft_size {fft_size} smaller than window length {spec.window_len}")
    rate = signal.sample_rate if isinstance(signal, Waveform) else DEFAULT_SAMPLE_RATE
    frames = frame(signal, spec).frames * spec.window_values()
    padded = np.zeros((frames.shape[0], fft_size))
    padded[:, : spec.window_len] = frames
    return ComplexSpectrogram(dft(padded), spec, fft_size, rate)


def istft(spec: ComplexSpectrogram, out_len: int) -> Waveform:
    fs = spec.frame_spec
    if spec.bins.shape[1] != spec.fft_size // 2 + 1:
        raise ShapeError("spectrogram bin count does not match fft_size")
    w = fs.window_values()
    frames = idft(spec.bins, spec.fft_size)[:, : fs.window_len] * w
    n_frames = frames.shape[0]
    signal = overlap_add(frames, fs, out_len)
    envelope = overlap_add(np.tile(w * w, (n_frames, 1)), fs, out_len)
    interior = envelope[fs.window_len: out_len - fs.window_len]
    if interior.size and interior.min() < ENVELOPE_FLOOR:
        raise DegenerateWindow(
            f"{fs.window} window at advance {fs.advance} leaves interior samples with zero envelope")
    return Waveform(signal / np.maximum(envelope, ENVELOPE_FLOOR), spec.sample_rate)
