"""Encoder/decoder pairs: fixed STFT codecs and learned convolutional codecs.

Latent layouts:

``magnitude``       |STFT|, L x F, phase kept on the side
``realimag_split``  [Re STFT | Im STFT], L x 2F
``learned``         ReLU(frames @ u.T), L x F, non-negative
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingPhase, ShapeError
from .signal_core import (DEFAULT_FFT_SIZE, ComplexSpectrogram, FrameSpec, Waveform,
                          frame, istft, overlap_add, stft)
from .tensorfile import load_tensor, save_tensor

LAYOUTS = ("magnitude", "realimag_split", "learned")


@dataclass(frozen=True, eq=False)
class TransformSpec:
    kind: str
    frame: FrameSpec
    feature_dim: int
    fft_size: int | None = None
    encoder_kernels: np.ndarray | None = None  # F x L_w
    decoder_kernels: np.ndarray | None = None  # L_w x F

    def __post_init__(self):
        if self.kind == "stft":
            if self.fft_size is None or self.feature_dim != self.fft_size // 2 + 1:
                raise ShapeError("stft transform needs feature_dim == fft_size // 2 + 1")
        elif self.kind == "learned":
            f, lw = self.feature_dim, self.frame.window_len
            u = np.array(self.encoder_kernels, dtype=np.float64)
            v = np.array(self.decoder_kernels, dtype=np.float64)
            if u.shape != (f, lw) or v.shape != (lw, f):
                raise ShapeError(
                    f"learned kernels must be ({f}, {lw}) and ({lw}, {f}), got {u.shape} and {v.shape}")
            u.setflags(write=False)
            v.setflags(write=False)
            object.__setattr__(self, "encoder_kernels", u)
            object.__setattr__(self, "decoder_kernels", v)
        else:
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def stft(cls, frame_spec: FrameSpec, fft_size: int = DEFAULT_FFT_SIZE):
        return cls("stft", frame_spec, fft_size // 2 + 1, fft_size)

    def with_kernels(self, encoder, decoder):
        return TransformSpec("learned", self.frame, self.feature_dim, None, encoder, decoder)


@dataclass(frozen=True, eq=False)
class LatentSignal:
    values: np.ndarray
    layout: str
    transform: TransformSpec
    sample_rate: int = 8000

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")

    @property
    def shape(self):
        return self.values.shape

    def complex_bins(self) -> np.ndarray:
        """Recombine the real/imaginary column halves (realimag_split only)."""
        if self.layout != "realimag_split":
            raise ValueError(f"{self.layout} latents carry no complex bins")
        f = self.values.shape[1] // 2
        return self.values[:, :f] + 1j * self.values[:, f:]

    def replace(self, values) -> "LatentSignal":
        return LatentSignal(np.asarray(values, dtype=np.float64), self.layout, self.transform,
                            self.sample_rate)


def _rate(x):
    return x.sample_rate if isinstance(x, Waveform) else 8000


def _require(spec, kind):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} transform, got {spec.kind}")


def encode_stft_mag(x, spec: TransformSpec):
    """Return ``(magnitude latent, phase)``; the phase array is L x F radians."""
    _require(spec, "stft")
    bins = stft(x, spec.frame, spec.fft_size).bins
    return LatentSignal(np.abs(bins), "magnitude", spec, _rate(x)), np.angle(bins)


def encode_stft_ri(x, spec: TransformSpec) -> LatentSignal:
    _require(spec, "stft")
    bins = stft(x, spec.frame, spec.fft_size).bins
    return LatentSignal(np.concatenate((bins.real, bins.imag), axis=1), "realimag_split", spec,
                        _rate(x))


def learned_preactivation(x, spec: TransformSpec) -> np.ndarray:
    """frames @ u.T, before the ReLU; no analysis window."""
    frames = frame(x, spec.frame).frames
    return frames @ spec.encoder_kernels.T


def encode_learned(x, spec: TransformSpec, relu=True) -> LatentSignal:
    """ReLU(sum_i frame[l, i] u[f, i]); ``relu=False`` exposes the linear encoder."""
    _require(spec, "learned")
    z = learned_preactivation(x, spec)
    return LatentSignal(np.maximum(z, 0.0) if relu else z, "learned", spec, _rate(x))


def decode_learned(xhat: LatentSignal, spec: TransformSpec, out_len: int) -> Waveform:
    _require(spec, "learned")
    values = np.asarray(xhat.values if isinstance(xhat, LatentSignal) else xhat, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != spec.feature_dim:
        raise ShapeError(f"latent must be (L, {spec.feature_dim}), got {values.shape}")
    synth = values @ spec.decoder_kernels.T
    rate = xhat.sample_rate if isinstance(xhat, LatentSignal) else 8000
    return Waveform(overlap_add(synth, spec.frame, out_len), rate)


def decode_stft(xhat: LatentSignal, spec: TransformSpec, out_len: int, mixture_phase=None) -> Waveform:
    _require(spec, "stft")
    if xhat.layout == "magnitude":
        if mixture_phase is None:
            raise MissingPhase("magnitude latents need the mixture phase to decode")
        phase = np.asarray(mixture_phase)
        if phase.shape != xhat.values.shape:
            raise ShapeError(f"phase shape {phase.shape} != latent shape {xhat.values.shape}")
        bins = xhat.values * np.exp(1j * phase)
    elif xhat.layout == "realimag_split":
        bins = xhat.complex_bins()
    else:
        raise ValueError("decode_stft cannot decode learned latents")
    if bins.shape[1] != spec.feature_dim:
        raise ShapeError(f"latent has {bins.shape[1]} features, transform has {spec.feature_dim}")
    return istft(ComplexSpectrogram(bins, spec.frame, spec.fft_size, xhat.sample_rate), out_len)


def encode(x, spec: TransformSpec, layout: str):
    """Dispatch on layout. Returns ``(latent, phase_or_None)``."""
    if layout == "magnitude":
        return encode_stft_mag(x, spec)
    if layout == "realimag_split":
        return encode_stft_ri(x, spec), None
    if layout == "learned":
        return encode_learned(x, spec), None
    raise ValueError(f"unknown layout {layout!r}")


def decode(xhat: LatentSignal, out_len: int, mixture_phase=None) -> Waveform:
    if xhat.layout == "learned":
        return decode_learned(xhat, xhat.transform, out_len)
    return decode_stft(xhat, xhat.transform, out_len, mixture_phase)


def init_learned(feature_dim: int, window_len: int, seed: int, advance: int | None = None) -> TransformSpec:
    """Kernels drawn i.i.d. uniform(-k, k) with k = sqrt(1 / window_len)."""
    if feature_dim <= 0 or window_len <= 0:
        raise ValueError("feature_dim and window_len must be positive")
    advance = window_len // 2 if advance is None else advance
    rng = np.random.default_rng(seed)
    k = np.sqrt(1.0 / window_len)
    u = rng.uniform(-k, k, size=(feature_dim, window_len))
    v = rng.uniform(-k, k, size=(window_len, feature_dim))
    return TransformSpec("learned", FrameSpec(window_len, max(advance, 1), "rect"), feature_dim,
                         None, u, v)


def save_kernels(path, spec: TransformSpec):
    """Encoder u (F x L_w) and decoder transposed (F x L_w) stacked as 2 x F x L_w float64."""
    _require(spec, "learned")
    stacked = np.stack((spec.encoder_kernels, spec.decoder_kernels.T))
    save_tensor(path, stacked, dtype="float64", layout="learned_kernels",
                window_len=spec.frame.window_len, advance=spec.frame.advance,
                feature_dim=spec.feature_dim)


def load_kernels(path) -> TransformSpec:
    arr, hdr = load_tensor(path)
    if hdr.get("layout") != "learned_kernels" or arr.ndim != 3 or arr.shape[0] != 2:
        raise ShapeError(f"{path} does not hold learned kernels")
    lw = int(hdr.get("window_len", arr.shape[2]))
    adv = int(hdr.get("advance", lw // 2))
    return TransformSpec("learned", FrameSpec(lw, adv, "rect"), arr.shape[1], None,
                         arr[0], arr[1].T)
