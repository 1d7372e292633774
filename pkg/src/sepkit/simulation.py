"""Synthetic sources, room-like impulse responses and SDR/SNR-controlled mixing."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import DegenerateSource
from .signal_core import DEFAULT_SAMPLE_RATE, MultichannelWaveform, Waveform, as_samples, dft, idft

SOURCE_KINDS = ("tone_mix", "filtered_noise", "ar_speechlike")
RIR_TAIL_LEVEL = 1e-4
RIR_MAX_TAIL = 4000


def _unit_rms(x):
    rms = np.sqrt(np.mean(x * x))
    if rms == 0.0:
        raise DegenerateSource("synthesized source is silent")
    return x / rms


def synth_source(kind: str, length: int, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
                 frequencies=None) -> Waveform:
    """Deterministic unit-RMS test signal.

    tone_mix        3-5 sinusoids (or the given ``frequencies`` in Hz)
    filtered_noise  white noise through a random two-pole resonator plus a slow envelope
    ar_speechlike   order-8 all-pole filtered excitation with 4 Hz amplitude modulation
    """
    if length <= 0:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / sample_rate
    nyq = sample_rate / 2.0
    if kind == "tone_mix":
        if frequencies is None:
            frequencies = rng.uniform(0.05 * nyq, 0.9 * nyq, size=rng.integers(3, 6))
        freqs = np.asarray(frequencies, dtype=np.float64)
        amps = rng.uniform(0.5, 1.0, size=freqs.size)
        phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
        x = np.sum(amps[:, None] * np.cos(2 * np.pi * freqs[:, None] * t + phases[:, None]), axis=0)
    elif kind == "filtered_noise":
        center = rng.uniform(0.05, 0.85) * np.pi
        radius = rng.uniform(0.9, 0.98)
        a = [1.0, -2.0 * radius * np.cos(center), radius * radius]
        x = sps.lfilter([1.0], a, rng.standard_normal(length))
        rate_hz = rng.uniform(1.0, 3.0)
        x = x * (1.0 + 0.8 * np.sin(2 * np.pi * rate_hz * t + rng.uniform(0, 2 * np.pi)))
    elif kind == "ar_speechlike":
        radii = rng.uniform(0.85, 0.97, size=4)
        angles = np.sort(rng.uniform(0.03, 0.9, size=4)) * np.pi
        poles = np.concatenate((radii * np.exp(1j * angles), radii * np.exp(-1j * angles)))
        a = np.real(np.poly(poles))
        pitch = rng.uniform(90.0, 220.0)
        excitation = 0.3 * rng.standard_normal(length)
        excitation[(np.arange(length) % max(int(sample_rate / pitch), 1)) == 0] += 1.0
        x = sps.lfilter([1.0], a, excitation)
        x = x * (1.0 + 0.9 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi)))
    else:
        raise ValueError(f"unknown source kind {kind!r}; choose from {SOURCE_KINDS}")
    return Waveform(_unit_rms(x), sample_rate)


def fft_convolve(a, b, out_len=None):
    """Linear convolution via the radix-2 FFT, truncated to ``out_len``."""
    n = len(a) + len(b) - 1
    size = 1 << (n - 1).bit_length()
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[:len(a)] = a
    pb[:len(b)] = b
    full = idft(dft(pa) * dft(pb), size)[:n]
    return full if out_len is None else full[:out_len]


def convolve_rir(source, rir) -> MultichannelWaveform:
    """Per-channel linear convolution, truncated to the source length.

    ``rir`` is (D, R) or a single 1-D response.
    """
    x = as_samples(source)
    h = np.atleast_2d(np.asarray(rir, dtype=np.float64))
    if h.shape[1] < 1 or not np.all(np.isfinite(h)):
        raise ValueError("impulse responses must be finite with at least one tap")
    rate = source.sample_rate if isinstance(source, Waveform) else DEFAULT_SAMPLE_RATE
    return MultichannelWaveform(np.stack([fft_convolve(x, hc, len(x)) for hc in h]), rate)


def synth_rir(num_channels: int, delays, decay: float, seed: int, length: int | None = None):
    """Direct-path impulse per channel plus sparse reflections decaying as decay**lag.

    Returns a (D, R) array. Reflection magnitudes strictly decrease with lag.
    """
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must lie in (0, 1)")
    delays = np.broadcast_to(np.asarray(delays, dtype=int), (num_channels,))
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    tail = int(np.ceil(np.log(RIR_TAIL_LEVEL) / np.log(decay)))
    tail = min(max(tail, 1), RIR_MAX_TAIL)
    if length is None:
        length = int(delays.max()) + tail
    rng = np.random.default_rng(seed)
    h = np.zeros((num_channels, length))
    for c, d in enumerate(delays):
        if d >= length:
            raise ValueError(f"delay {d} does not fit in an RIR of length {length}")
        h[c, d] = 1.0
        lag = int(rng.integers(1, 8))
        while d + lag < length and lag < tail:
            h[c, d + lag] = rng.choice((-1.0, 1.0)) * 0.7 * decay ** lag
            lag += int(rng.integers(1, 8))
    return h


@dataclass
class MixtureScenario:
    num_sources: int = 2
    sdr_range: tuple = (-2.5, 2.5)
    snr_range: tuple | None = (20.0, 30.0)  # None: no noise
    rirs: list | None = None  # per source (D, R) arrays
    seed: int = 0
    # source generation, used when the scenario drives the sources itself
    source_kind: str = "ar_speechlike"
    length: int = 16000
    sample_rate: int = DEFAULT_SAMPLE_RATE
    num_channels: int = 1
    rir_decay: float | None = None
    rir_max_delay: int = 8

    def __post_init__(self):
        if self.num_sources < 1:
            raise ValueError("need at least one source")
        self.sdr_range = tuple(float(v) for v in self.sdr_range)
        if self.sdr_range[0] > self.sdr_range[1]:
            raise ValueError("sdr_range must be ordered (low, high)")
        if self.snr_range is not None:
            self.snr_range = tuple(float(v) for v in self.snr_range)
            if self.snr_range[0] > self.snr_range[1]:
                raise ValueError("snr_range must be ordered (low, high)")
        if self.rirs is not None:
            self.rirs = [np.atleast_2d(np.asarray(r, dtype=np.float64)) for r in self.rirs]
            if len({r.shape[0] for r in self.rirs}) != 1:
                raise ValueError("all RIRs must have the same channel count")
            if len(self.rirs) != self.num_sources:
                raise ValueError("need one RIR set per source")

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        if self.rirs is not None:
            d["rirs"] = [r.tolist() for r in self.rirs]
        return d


@dataclass
class MixtureExample:
    mixture: MultichannelWaveform
    clean_images: list
    noise: MultichannelWaveform
    metadata: dict = field(default_factory=dict)
    dry_sources: list | None = None


def example_rng(seed: int, index: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent stream per (seed, example index, stream)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


def _energy(a):
    a = np.asarray(a)
    return float(np.sum(a * a))


def mix(sources, scenario: MixtureScenario, index: int = 0) -> MixtureExample:
    """Scale and sum sources (plus white noise) at randomly drawn SDR and SNR.

    Source 1 is the 0 dB anchor; source k >= 2 gets gain g_k with
    10 log10(E_1 / E_k) equal to its drawn SDR, E being image energy summed
    over channels. The mixture is summed in ascending source order, then noise.
    """
    if len(sources) != scenario.num_sources:
        raise ValueError(f"scenario expects {scenario.num_sources} sources, got {len(sources)}")
    rng = example_rng(scenario.seed, index)
    rate = sources[0].sample_rate if isinstance(sources[0], Waveform) else scenario.sample_rate
    arrays = [as_samples(s) for s in sources]
    n = max(len(a) for a in arrays)
    arrays = [np.pad(a, (0, n - len(a))) for a in arrays]
    if scenario.rirs is not None:
        images = [convolve_rir(a, r).data for a, r in zip(arrays, scenario.rirs)]
    else:
        images = [a[None, :] for a in arrays]
    energies = [_energy(im) for im in images]
    for k, e in enumerate(energies):
        if e <= 0.0:
            raise DegenerateSource(f"source {k + 1} has zero energy")
    sdrs = [0.0] + [float(rng.uniform(*scenario.sdr_range)) for _ in range(len(images) - 1)]
    gains = [1.0] + [float(np.sqrt(energies[0] / (energies[k] * 10.0 ** (sdrs[k] / 10.0))))
                     for k in range(1, len(images))]
    images = [g * im for g, im in zip(gains, images)]
    total = images[0].copy()
    for im in images[1:]:
        total = total + im
    if scenario.snr_range is None:
        snr = None
        noise = np.zeros_like(total)
    else:
        snr = float(rng.uniform(*scenario.snr_range))
        raw = rng.standard_normal(total.shape)
        noise = raw * np.sqrt(_energy(total) / (_energy(raw) * 10.0 ** (snr / 10.0)))
    mixture = total + noise
    meta = {
        "seed": scenario.seed,
        "index": index,
        "gains": gains,
        "sdr_db": sdrs,
        "snr_db": snr,
        "sdr_anchor": "source 1 (energy over all channels)",
        "length": n,
    }
    to_mc = lambda a: MultichannelWaveform(a, rate)  # noqa: E731
    return MixtureExample(to_mc(mixture), [to_mc(im) for im in images], to_mc(noise), meta)


def measured_sdrs(example: MixtureExample):
    """10 log10(E_1 / E_k) recomputed from the stored images."""
    e = [_energy(im.data) for im in example.clean_images]
    return [10.0 * np.log10(e[0] / ek) for ek in e]


def simulate_example(scenario: MixtureScenario, index: int = 0) -> MixtureExample:
    """Draw sources (and RIRs if configured) for example ``index`` and mix them."""
    rng = example_rng(scenario.seed, index, stream=1)
    seeds = rng.integers(0, 2 ** 63 - 1, size=2 * scenario.num_sources)
    sources = [synth_source(scenario.source_kind, scenario.length, int(seeds[k]), scenario.sample_rate)
               for k in range(scenario.num_sources)]
    sc = scenario
    if scenario.rir_decay is not None and scenario.rirs is None:
        rirs = []
        for k in range(scenario.num_sources):
            r = np.random.default_rng(int(seeds[scenario.num_sources + k]))
            delays = r.integers(0, scenario.rir_max_delay + 1, size=scenario.num_channels)
            rirs.append(synth_rir(scenario.num_channels, delays, scenario.rir_decay,
                                  int(seeds[scenario.num_sources + k])))
        sc = MixtureScenario(**{**scenario.__dict__, "rirs": rirs})
    elif scenario.rirs is None and scenario.num_channels > 1:
        # anechoic multichannel: pure per-channel delays
        rirs = []
        for k in range(scenario.num_sources):
            r = np.random.default_rng(int(seeds[scenario.num_sources + k]))
            delays = r.integers(0, scenario.rir_max_delay + 1, size=scenario.num_channels)
            h = np.zeros((scenario.num_channels, int(delays.max()) + 1))
            h[np.arange(scenario.num_channels), delays] = 1.0
            rirs.append(h)
        sc = MixtureScenario(**{**scenario.__dict__, "rirs": rirs})
    example = mix(sources, sc, index)
    example.metadata["source_seeds"] = [int(s) for s in seeds[:scenario.num_sources]]
    example.dry_sources = sources
    return example
