import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepkit import (DegenerateWindow, FrameSpec, MultichannelWaveform, ShapeError, SignalTooShort,
                    UnsupportedSize, Waveform)
from sepkit.signal_core import dft, fft, frame, idft, istft, overlap_add, parse_frame, stft, window
from conftest import naive_dft


def test_waveform_is_read_only_and_validated():
    w = Waveform(np.arange(4.0))
    assert len(w) == 4
    with pytest.raises(ValueError):
        w.samples[0] = 1.0
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ShapeError):
        Waveform(np.zeros((2, 2)))


def test_multichannel_reference_and_channels():
    mc = MultichannelWaveform(np.arange(6.0).reshape(2, 3), reference_channel=1)
    assert mc.num_channels == 2 and len(mc) == 3
    np.testing.assert_array_equal(mc.reference().samples, [3, 4, 5])
    back = MultichannelWaveform.from_channels(mc.channels)
    np.testing.assert_array_equal(back.data, mc.data)
    with pytest.raises(ValueError):
        MultichannelWaveform(np.zeros((2, 3)), reference_channel=2)


def test_frame_presets_in_samples():
    assert parse_frame("4/2") == FrameSpec(32, 16)
    assert parse_frame("64/16") == FrameSpec(512, 128)
    assert parse_frame("8/4", sample_rate=16000) == FrameSpec(128, 64)
    with pytest.raises(ValueError):
        parse_frame("garbage")


def test_frame_indices_and_too_short():
    x = np.arange(10.0)
    f = frame(x, FrameSpec(4, 3, "rect")).frames
    np.testing.assert_array_equal(f, [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 9]])
    with pytest.raises(SignalTooShort):
        frame(np.zeros(3), FrameSpec(4, 2))


def test_sqrt_hann_squared_is_cola_at_half_overlap():
    w = window("sqrt_hann", 32)
    env = overlap_add(np.tile(w * w, (10, 1)), FrameSpec(32, 16), 32 + 9 * 16)
    np.testing.assert_allclose(env[32:-32], 1.0, atol=1e-14)


@pytest.mark.parametrize("n", [2, 8, 32, 256])
def test_dft_matches_naive_and_idft_inverts(rng, n):
    x = rng.standard_normal(n)
    np.testing.assert_allclose(dft(x), naive_dft(x)[: n // 2 + 1], atol=1e-11)
    np.testing.assert_allclose(idft(dft(x), n), x, atol=1e-13)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(UnsupportedSize):
        fft(np.zeros(12))
    with pytest.raises(UnsupportedSize):
        stft(np.zeros(1000), FrameSpec(32, 16), fft_size=48)


def test_parseval(rng):
    x = rng.standard_normal(64)
    assert np.isclose(np.sum(np.abs(fft(x)) ** 2) / 64, np.dot(x, x))


def test_cosine_at_bin_centre():
    n = 64
    x = np.cos(2 * np.pi * 5 * np.arange(n) / n)
    spec = np.abs(dft(x))
    assert np.argmax(spec) == 5
    assert np.isclose(spec[5], n / 2)


@pytest.mark.parametrize("preset", ["64/16", "4/2"])
def test_stft_round_trip_interior(rng, preset):
    fs = parse_frame(preset)
    x = rng.standard_normal(4000)
    spec = stft(x, fs)
    y = istft(spec, len(x)).samples
    sl = slice(fs.window_len, len(x) - fs.window_len)
    assert np.max(np.abs(y[sl] - x[sl])) / np.max(np.abs(x[sl])) < 1e-12


def test_stft_linearity(rng):
    fs = parse_frame("4/2")
    a, b = rng.standard_normal((2, 800))
    np.testing.assert_allclose(stft(2 * a - 3 * b, fs, 64).bins,
                               2 * stft(a, fs, 64).bins - 3 * stft(b, fs, 64).bins, atol=1e-12)


def test_rect_window_without_overlap_gap_is_degenerate():
    # hann with no overlap has zero envelope at every frame start
    fs = FrameSpec(32, 32, "hann")
    spec = stft(np.ones(320), fs, 32)
    with pytest.raises(DegenerateWindow):
        istft(spec, 320)


@settings(max_examples=25, deadline=None)
@given(st.integers(64, 600), st.sampled_from([(16, 8), (32, 16), (32, 8), (24, 12)]),
       st.integers(0, 2 ** 31))
def test_round_trip_property(n, frame_pair, seed):
    fs = FrameSpec(*frame_pair)
    x = np.random.default_rng(seed).standard_normal(n)
    y = istft(stft(x, fs, 64), n).samples
    sl = slice(fs.window_len, fs.covered_length(fs.num_frames(n)) - fs.window_len)
    np.testing.assert_allclose(y[sl], x[sl], atol=1e-11)


@pytest.mark.parametrize("n", [100, 511, 512, 4000])
def test_edge_padding_makes_every_sample_interior(rng, n):
    from sepkit.signal_core import edge_padding
    fs = parse_frame("64/16")
    head, tail = edge_padding(n, fs)
    total = head + n + tail
    assert (total - fs.window_len) % fs.advance == 0
    x = np.pad(rng.standard_normal(n), (head, tail))
    y = istft(stft(x, fs), total).samples
    np.testing.assert_allclose(y[head:head + n], x[head:head + n], atol=1e-12)
