import numpy as np
import pytest

from sepkit import FrameSpec, MissingPhase, ShapeError
from sepkit.signal_core import frame, parse_frame, stft
from sepkit.transforms import (TransformSpec, decode, decode_learned, decode_stft, encode,
                               encode_learned, encode_stft_mag, encode_stft_ri, init_learned,
                               load_kernels, save_kernels)

STFT = TransformSpec.stft(parse_frame("4/2"), 64)


def test_stft_spec_invariant():
    with pytest.raises(ShapeError):
        TransformSpec("stft", parse_frame("4/2"), 30, 64)
    assert STFT.feature_dim == 33


def test_learned_spec_shape_check():
    with pytest.raises(ShapeError):
        TransformSpec("learned", FrameSpec(8, 4, "rect"), 5, None, np.zeros((5, 7)), np.zeros((8, 5)))


def test_magnitude_matches_stft(rng):
    x = rng.standard_normal(500)
    lat, phase = encode_stft_mag(x, STFT)
    bins = stft(x, STFT.frame, 64).bins
    np.testing.assert_allclose(lat.values, np.abs(bins), atol=1e-12)
    np.testing.assert_allclose(lat.values * np.exp(1j * phase), bins, atol=1e-12)
    assert not np.any(encode_stft_mag(np.zeros(500), STFT)[0].values)


def test_realimag_layout(rng):
    x = rng.standard_normal(500)
    lat = encode_stft_ri(x, STFT)
    bins = stft(x, STFT.frame, 64).bins
    assert lat.values.shape == (bins.shape[0], 66)
    np.testing.assert_array_equal(lat.complex_bins(), bins)


def test_even_symmetric_frame_has_no_imaginary_part():
    # a single frame whose windowed, zero-padded content is circularly even
    fs = FrameSpec(32, 16, "rect")
    spec = TransformSpec.stft(fs, 32)
    n = np.arange(32)
    x = np.cos(2 * np.pi * 3 * n / 32)
    lat = encode_stft_ri(x, spec)
    assert np.max(np.abs(lat.values[:, 17:])) < 1e-12


@pytest.mark.parametrize("layout", ["magnitude", "realimag_split"])
def test_stft_decode_round_trip(rng, layout):
    x = rng.standard_normal(800)
    lat, phase = encode(x, STFT, layout)
    y = decode(lat, len(x), phase).samples
    np.testing.assert_allclose(y[32:-32], x[32:-32], atol=1e-10)


def test_magnitude_decode_needs_phase(rng):
    lat, _ = encode_stft_mag(rng.standard_normal(200), STFT)
    with pytest.raises(MissingPhase):
        decode_stft(lat, STFT, 200)


def test_learned_encoder_matches_loop_oracle(rng):
    spec = init_learned(12, 8, seed=3, advance=4)
    x = rng.standard_normal(60)
    got = encode_learned(x, spec).values
    u = spec.encoder_kernels
    for ell in range((60 - 8) // 4 + 1):
        for f in range(12):
            acc = sum(x[ell * 4 + i] * u[f, i] for i in range(8))
            assert abs(got[ell, f] - max(acc, 0.0)) < 1e-12


def test_learned_relu_cases():
    fs = FrameSpec(4, 2, "rect")
    zero = TransformSpec("learned", fs, 4, None, np.zeros((4, 4)), np.zeros((4, 4)))
    assert not np.any(encode_learned(np.ones(20), zero).values)
    neg = zero.with_kernels(-np.eye(4), np.eye(4))
    assert not np.any(encode_learned(np.ones(20), neg).values)


def test_learned_decoder_single_frame_and_linearity(rng):
    spec = init_learned(6, 8, seed=1)
    xhat = rng.standard_normal((1, 6))
    np.testing.assert_allclose(decode_learned(xhat, spec, 8).samples,
                               spec.decoder_kernels @ xhat[0], atol=1e-14)
    a, b = rng.standard_normal((2, 5, 6))
    lhs = decode_learned(2 * a - b, spec, 40).samples
    rhs = 2 * decode_learned(a, spec, 40).samples - decode_learned(b, spec, 40).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_learned_pinv_decoder_inverts_linear_encoder(rng):
    lw, ls, f = 16, 8, 24
    u = rng.standard_normal((f, lw))
    # each sample is covered by lw / ls frames; scale the pseudo-inverse to undo that
    v = np.linalg.pinv(u) * (ls / lw)
    spec = TransformSpec("learned", FrameSpec(lw, ls, "rect"), f, None, u, v)
    x = rng.standard_normal(400)
    z = encode_learned(x, spec, relu=False)
    y = decode_learned(z, spec, len(x)).samples
    np.testing.assert_allclose(y[lw:-lw], x[lw:-lw], atol=1e-6)


def test_linear_encoders_superpose(rng):
    a, b = rng.standard_normal((2, 300))
    np.testing.assert_allclose(encode_stft_ri(a + b, STFT).values,
                               encode_stft_ri(a, STFT).values + encode_stft_ri(b, STFT).values,
                               atol=1e-12)
    spec = init_learned(10, 8, seed=0)
    np.testing.assert_allclose(encode_learned(a + b, spec, relu=False).values,
                               encode_learned(a, spec, relu=False).values
                               + encode_learned(b, spec, relu=False).values, atol=1e-12)


def test_learned_latent_non_negative(rng):
    spec = init_learned(20, 8, seed=5)
    assert encode_learned(rng.standard_normal(200), spec).values.min() >= 0.0


def test_init_learned_determinism_and_statistics():
    a, b, c = init_learned(128, 100, 7), init_learned(128, 100, 7), init_learned(128, 100, 8)
    np.testing.assert_array_equal(a.encoder_kernels, b.encoder_kernels)
    assert not np.array_equal(a.encoder_kernels, c.encoder_kernels)
    k = np.sqrt(1 / 100)
    u = a.encoder_kernels
    assert np.abs(u).max() <= k
    sigma = k / np.sqrt(3) / np.sqrt(u.size)
    assert abs(u.mean()) < 3 * sigma


def test_kernel_file_round_trip(tmp_path):
    spec = init_learned(9, 8, seed=2, advance=4)
    save_kernels(tmp_path / "k.sepk", spec)
    back = load_kernels(tmp_path / "k.sepk")
    assert back.frame == spec.frame
    np.testing.assert_array_equal(back.encoder_kernels, spec.encoder_kernels)
    np.testing.assert_array_equal(back.decoder_kernels, spec.decoder_kernels)


def test_frames_are_rectangular(rng):
    spec = init_learned(8, 8, seed=0)
    x = rng.standard_normal(64)
    np.testing.assert_allclose(encode_learned(x, spec, relu=False).values,
                               frame(x, spec.frame).frames @ spec.encoder_kernels.T)
