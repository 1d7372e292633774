"""Time-domain multichannel Wiener beamformer with stacked history taps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .errors import InsufficientData, NumericalFailure, ShapeError
from .signal_core import MultichannelWaveform, Waveform, as_samples
from .tensorfile import load_tensor, save_tensor

DEFAULT_FILTER_LEN = 255
DEFAULT_LOADING = 1e-5


@dataclass(frozen=True, eq=False)
class StackedObservation:
    """Row t = [y_1(t-L_f) .. y_D(t-L_f), ..., y_1(t) .. y_D(t)], zeros before t = 0."""

    vectors: np.ndarray
    num_channels: int
    history: int
    sample_rate: int = 8000

    @property
    def dim(self):
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class BeamformerDesign:
    taps: np.ndarray
    history: int
    num_channels: int
    loading: float = DEFAULT_LOADING


def stack(y, history: int) -> StackedObservation:
    if history < 0:
        raise ValueError("history length must be >= 0")
    if isinstance(y, MultichannelWaveform):
        data, rate = y.data, y.sample_rate
    elif isinstance(y, Waveform):
        data, rate = y.samples[None, :], y.sample_rate
    else:
        data, rate = np.atleast_2d(np.asarray(y, dtype=np.float64)), 8000
    vectors = kernels.stack_history(np.ascontiguousarray(data, dtype=np.float64), int(history))
    return StackedObservation(vectors, data.shape[0], int(history), rate)


def design_wiener(stacked: StackedObservation, target, loading=DEFAULT_LOADING) -> BeamformerDesign:
    """Solve (R + delta I) f = r with time-averaged statistics.

    R = mean_t y(t) y(t)^T, r = mean_t y(t) x(t), delta = loading * trace(R) / dim.
    """
    yv = stacked.vectors
    x = as_samples(target)
    n, dim = yv.shape
    if x.shape[0] != n:
        raise ShapeError(f"target has {x.shape[0]} samples, observation has {n}")
    if n <= dim:
        raise InsufficientData(f"need more than {dim} samples to design {dim} taps, got {n}")
    if not (np.all(np.isfinite(yv)) and np.all(np.isfinite(x))):
        raise NumericalFailure("non-finite samples in beamformer input")
    if loading <= 0:
        raise ValueError("diagonal loading must be positive")
    cov = yv.T @ yv / n
    cross = yv.T @ x / n
    delta = loading * np.trace(cov) / dim
    if not delta > 0:
        raise NumericalFailure("observation has zero energy")
    try:
        taps = linalg.cho_solve(linalg.cho_factor(cov + delta * np.eye(dim)), cross)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"Wiener system not positive definite: {exc}") from None
    return BeamformerDesign(taps, stacked.history, stacked.num_channels, float(loading))


def wiener_system(stacked: StackedObservation, target, loading=DEFAULT_LOADING):
    """The loaded normal equations ``(R + delta I, r)``, for residual checks."""
    yv = stacked.vectors
    x = as_samples(target)
    n, dim = yv.shape
    cov = yv.T @ yv / n
    return cov + loading * np.trace(cov) / dim * np.eye(dim), yv.T @ x / n


def apply_beamformer(design: BeamformerDesign, stacked: StackedObservation) -> Waveform:
    if stacked.dim != design.taps.shape[0]:
        raise ShapeError(f"design has {design.taps.shape[0]} taps, observation rows have {stacked.dim}")
    return Waveform(stacked.vectors @ design.taps, stacked.sample_rate)


def beamform_from_estimates(y: MultichannelWaveform, estimates, history=DEFAULT_FILTER_LEN,
                            loading=DEFAULT_LOADING):
    """One Wiener filter per source, using each estimate as the reference-channel target.

    Returns ``(outputs, designs)``.
    """
    stacked = stack(y, history)
    outputs, designs = [], []
    for est in estimates:
        if len(as_samples(est)) != len(y):
            raise ShapeError("estimates must have the mixture length")
        d = design_wiener(stacked, est, loading)
        designs.append(d)
        outputs.append(apply_beamformer(d, stacked))
    return outputs, designs


def save_design(path, design: BeamformerDesign):
    save_tensor(path, design.taps, dtype="float64", layout="beamformer_taps",
                history=design.history, channels=design.num_channels, loading=design.loading)


def load_design(path) -> BeamformerDesign:
    taps, hdr = load_tensor(path)
    if hdr.get("layout") != "beamformer_taps" or taps.ndim != 1:
        raise ShapeError(f"{path} does not hold beamformer taps")
    return BeamformerDesign(taps, int(hdr["history"]), int(hdr["channels"]), float(hdr["loading"]))
