"""Mask-based source extraction and oracle masks standing in for a separator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MalformedFile, ShapeError
from .signal_core import ComplexSpectrogram
from .tensorfile import load_tensor, save_tensor
from .transforms import LAYOUTS, LatentSignal

MAG_EPS = 1e-10
SIGNED_MASK_LIMIT = 5.0


@dataclass(frozen=True, eq=False)
class Mask:
    values: np.ndarray
    layout: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("mask contains NaN or Inf")
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        object.__setattr__(self, "values", v)


def apply_mask(y: LatentSignal, masks) -> list:
    """Elementwise product of the mixture latent with each source mask.

    For the realimag_split layout the real and imaginary columns each take
    their own mask entry.
    """
    out = []
    for m in masks:
        values = m.values if isinstance(m, Mask) else np.asarray(m, dtype=np.float64)
        if isinstance(m, Mask) and m.layout != y.layout:
            raise ShapeError(f"mask layout {m.layout} does not match latent layout {y.layout}")
        if values.shape != y.values.shape:
            raise ShapeError(f"mask shape {values.shape} != latent shape {y.values.shape}")
        out.append(y.replace(y.values * values))
    return out


def identity_masks(y: LatentSignal, num_sources: int) -> list:
    return [Mask(np.ones_like(y.values), y.layout) for _ in range(num_sources)]


def _as_complex(z):
    if isinstance(z, ComplexSpectrogram):
        return z.bins
    if isinstance(z, LatentSignal):
        return z.complex_bins() if z.layout == "realimag_split" else z.values
    return np.asarray(z)


def _to_layout(values, layout):
    return np.concatenate((values, values), axis=1) if layout == "realimag_split" else values


def oracle_irm(clean, mixture) -> list:
    """|X_k| / (sum_j |X_j| + eps), expanded to the mixture's layout."""
    layout = mixture.layout if isinstance(mixture, LatentSignal) else "magnitude"
    mags = [np.abs(_as_complex(c)) for c in clean]
    shape = np.abs(_as_complex(mixture)).shape
    if any(m.shape != shape for m in mags):
        raise ShapeError("clean latents must match the mixture shape")
    total = np.sum(mags, axis=0) + MAG_EPS
    return [Mask(_to_layout(m / total, layout), layout) for m in mags]


def oracle_psm(clean, mixture) -> list:
    """(|X_k| / |Y|) cos(theta_y - theta_k), clamped to [-5, 5]; 0 where |Y| < eps.

    Inputs must carry phase: ComplexSpectrogram, complex arrays or
    realimag_split latents.
    """
    if isinstance(mixture, LatentSignal) and mixture.layout == "learned":
        raise ValueError("phase-sensitive masks need complex spectra, not learned latents")
    layout = mixture.layout if isinstance(mixture, LatentSignal) else "magnitude"
    y = _as_complex(mixture)
    if not np.iscomplexobj(y):
        raise ValueError("oracle_psm needs complex mixture bins (the phase)")
    y_mag = np.abs(y)
    safe = np.where(y_mag < MAG_EPS, 1.0, y_mag)
    masks = []
    for c in clean:
        x = _as_complex(c)
        if x.shape != y.shape:
            raise ShapeError("clean spectra must match the mixture shape")
        # Re(X conj(Y)) / |Y|^2 == |X|/|Y| cos(theta_y - theta_x)
        m = np.real(x * np.conj(y)) / (safe * safe)
        m = np.where(y_mag < MAG_EPS, 0.0, np.clip(m, -SIGNED_MASK_LIMIT, SIGNED_MASK_LIMIT))
        masks.append(Mask(_to_layout(m, layout), layout))
    return masks


def save_masks(path, masks):
    values = np.stack([m.values for m in masks])
    layouts = {m.layout for m in masks}
    if len(layouts) != 1:
        raise ShapeError("all masks in a file must share one layout")
    k, frames, features = values.shape
    save_tensor(path, values, dtype="float32", sources=k, frames=frames, features=features,
                layout=layouts.pop())


def load_masks(path, expected_shape=None) -> list:
    """Read a mask file; ``expected_shape`` is an optional (L, F') check."""
    arr, hdr = load_tensor(path)
    try:
        dims = (int(hdr["sources"]), int(hdr["frames"]), int(hdr["features"]))
        layout = hdr["layout"]
    except (KeyError, TypeError, ValueError):
        raise MalformedFile(f"{path}: mask header lacks sources/frames/features/layout") from None
    if arr.shape != dims:
        raise MalformedFile(f"{path}: header dims {dims} disagree with payload shape {arr.shape}")
    if layout not in LAYOUTS:
        raise MalformedFile(f"{path}: unknown layout {layout!r}")
    if expected_shape is not None and tuple(arr.shape[1:]) != tuple(expected_shape):
        raise ShapeError(f"{path}: masks are {arr.shape[1:]}, expected {tuple(expected_shape)}")
    return [Mask(a.astype(np.float64), layout) for a in arr]
