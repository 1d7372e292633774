"""sepkit: source-separation building blocks at desk scale.

STFT and learned encoder/decoder pairs, mask extraction with oracle masks,
PIT-wrapped losses with analytic gradients, SI-SDR/SDR metrics, a time-domain
multichannel Wiener beamformer and a synthetic mixture simulator.
"""
__version__ = "0.1.0"

from .errors import (DegenerateReference, DegenerateSource, DegenerateWindow, Diverged,
                     InsufficientData, MalformedFile, MissingPhase, NumericalFailure, SepkitError,
                     ShapeError, SignalTooShort, TooManySources, UnsupportedSize)
from .signal_core import (ComplexSpectrogram, FramedSignal, FrameSpec, MultichannelWaveform,
                          Waveform, dft, frame, idft, istft, overlap_add, parse_frame, stft)

__all__ = [
    "ComplexSpectrogram", "DegenerateReference", "DegenerateSource", "DegenerateWindow",
    "Diverged", "FrameSpec", "FramedSignal", "InsufficientData", "MalformedFile",
    "MissingPhase", "MultichannelWaveform", "NumericalFailure", "SepkitError", "ShapeError",
    "SignalTooShort", "TooManySources", "UnsupportedSize", "Waveform", "__version__", "dft",
    "frame", "idft", "istft", "overlap_add", "parse_frame", "stft",
]
