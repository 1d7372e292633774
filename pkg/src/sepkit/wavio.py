"""RIFF/WAVE reading and writing (PCM16 and IEEE float32, any channel count)."""
import numpy as np
from scipy.io import wavfile

from .signal_core import MultichannelWaveform, Waveform

FORMATS = ("float32", "pcm16")


def read_wav(path):
    """Return a Waveform for mono files, a MultichannelWaveform otherwise.

    PCM16 is scaled to [-1, 1) by 1/32768.
    """
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 1:
        return Waveform(data, rate)
    return MultichannelWaveform(data.T, rate)


def read_multichannel(path) -> MultichannelWaveform:
    w = read_wav(path)
    if isinstance(w, Waveform):
        return MultichannelWaveform(w.samples[None, :], w.sample_rate)
    return w


def write_wav(path, wave, fmt="float32"):
    if isinstance(wave, Waveform):
        data, rate = wave.samples, wave.sample_rate
    elif isinstance(wave, MultichannelWaveform):
        data, rate = wave.data.T, wave.sample_rate
        if data.shape[1] == 1:
            data = data[:, 0]
    else:
        raise TypeError("write_wav expects a Waveform or MultichannelWaveform")
    if fmt == "float32":
        out = np.ascontiguousarray(data, dtype="<f4")
    elif fmt == "pcm16":
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    else:
        raise ValueError(f"fmt must be one of {FORMATS}")
    wavfile.write(path, rate, out)
