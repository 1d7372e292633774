"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget.

Every test prints one ``criterion N: PASS|FAIL`` line (shown even under
output capture) before asserting.
"""
import itertools
import time

import numpy as np
import pytest

from sepkit.beamforming import beamform_from_estimates, design_wiener, stack, wiener_system
from sepkit.cli import reconstruction_sisdr, toy_setup
from sepkit.extraction import apply_mask, oracle_irm
from sepkit.losses import loss_mse, loss_pmse, loss_sisdr, loss_tlmse, loss_tmse, pit
from sepkit.metrics import metric_sdr, metric_sisdr
from sepkit.signal_core import MultichannelWaveform, edge_padding, istft, parse_frame, stft
from sepkit.simulation import MixtureScenario, measured_sdrs, simulate_example
from sepkit.toytrain import train_autoencoder
from sepkit.transforms import TransformSpec, decode, encode


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def _pairs(n, length=256, seed=2024):
    """Correlated (estimate, reference) pairs with SI-SDR well inside the caps."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = rng.standard_normal(length)
        xhat = rng.uniform(0.2, 3.0) * rng.choice((-1, 1)) * x + rng.uniform(0.1, 3.0) * rng.standard_normal(length)
        out.append((xhat, x))
    return out


def _fd_gradient(f, point, h):
    g = np.zeros_like(point)
    for idx in np.ndindex(point.shape):
        up, down = point.copy(), point.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (f(up) - f(down)) / (2 * h)
    return g


def _mask_separate(mixture, cleans, frame="64/16", fft_size=512):
    """IRM masking of a mono mixture in the STFT magnitude domain, using mixture phase."""
    fs = parse_frame(frame)
    n = len(mixture)
    pad = edge_padding(n, fs)
    spec = TransformSpec.stft(fs, fft_size)
    y, phase = encode(np.pad(mixture, pad), spec, "magnitude")
    clean = [encode(np.pad(c, pad), spec, "magnitude")[0] for c in cleans]
    ests = apply_mask(y, oracle_irm(clean, y))
    return [decode(e, n + sum(pad), phase).samples[pad[0]:pad[0] + n] for e in ests]


def test_criterion_1_stft_perfect_reconstruction(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for preset in ("64/16", "4/2"):
        fs = parse_frame(preset)
        for _ in range(50):
            n = int(rng.integers(2000, 8000))
            x = rng.standard_normal(n)
            y = istft(stft(x, fs), n).samples
            end = fs.covered_length(fs.num_frames(n)) - fs.window_len
            sl = slice(fs.window_len, end)
            worst = max(worst, np.linalg.norm(y[sl] - x[sl]) / np.linalg.norm(x[sl]))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 5
    report(1, ok, f"max interior relative error {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-10
    assert elapsed < 5


def test_criterion_2_alpha_beta_identity(report):
    start = time.perf_counter()
    worst = 0.0
    for xhat, x in _pairs(1000):
        alpha = np.dot(xhat, x) / np.dot(x, x)
        beta = 1.0 / alpha
        beta_form = -10 * np.log10(np.dot(x, x) / np.sum((x - beta * xhat) ** 2))
        worst = max(worst, abs(loss_sisdr(xhat, x)[0].value - beta_form))
    elapsed = time.perf_counter() - start
    report(2, worst < 1e-9 and elapsed < 5, f"max |alpha form - beta form| {worst:.2e} dB, {elapsed:.2f} s")
    assert worst < 1e-9
    assert elapsed < 5


def test_criterion_3_sisdr_tlmse_relation(report):
    worst = 0.0
    for xhat, x in _pairs(1000):
        lv = loss_sisdr(xhat, x)[0]
        shifted = loss_tlmse(lv.aux["beta"] * xhat, x)[0].value - 10 * np.log10(np.dot(x, x))
        worst = max(worst, abs(lv.value - shifted))
    report(3, worst < 1e-9, f"max deviation {worst:.2e} dB")
    assert worst < 1e-9


def test_criterion_4_gradient_suite(report):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = {}
    for name in ("pmse", "mse", "sisdr", "tlmse", "tmse"):
        errs = []
        for _ in range(100):
            if name == "pmse":
                mag = rng.uniform(0.1, 2, (6, 9))
                ty, tk = rng.uniform(-np.pi, np.pi, (2, 6, 9))
                est = rng.uniform(0.1, 2, (6, 9))
                fn = lambda e, mag=mag, ty=ty, tk=tk: loss_pmse(e, mag, ty, tk)  # noqa: E731
            elif name == "mse":
                tgt = rng.standard_normal((6, 9))
                est = rng.standard_normal((6, 9))
                fn = lambda e, tgt=tgt: loss_mse(e, tgt)  # noqa: E731
            else:
                est, x = _pairs(1, 64, seed=int(rng.integers(2 ** 32)))[0]
                base = {"sisdr": loss_sisdr, "tlmse": loss_tlmse, "tmse": loss_tmse}[name]
                fn = lambda e, x=x, base=base: base(e, x)  # noqa: E731
            analytic = fn(est)[1]
            h = 1e-5 * np.sqrt(np.mean(est ** 2))
            numeric = _fd_gradient(lambda e: fn(e)[0].value, est, h)
            errs.append(np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic)))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    report(4, top < 1e-5 and elapsed < 30,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.2f} s")
    assert top < 1e-5
    assert elapsed < 30


def test_criterion_5_pit_exhaustive(report):
    rng = np.random.default_rng(5)
    mismatches = 0
    total_cases = 0
    for k in (2, 3, 4):
        for _ in range(200):
            refs = list(rng.standard_normal((k, 40)))
            ests = [refs[j] * rng.uniform(0.5, 1.5) + rng.standard_normal(40) for j in rng.permutation(k)]
            fn = loss_sisdr if rng.uniform() < 0.5 else loss_tmse
            best, best_perm = None, None
            for perm in itertools.permutations(range(k)):
                acc = 0
                for r in range(k):
                    acc = acc + fn(ests[perm[r]], refs[r])[0].value
                acc = acc / k
                if best is None or acc < best:
                    best, best_perm = acc, list(perm)
            got = pit(fn, ests, refs)
            total_cases += 1
            mismatches += (got.value != best) or (got.best_permutation != best_perm)
    report(5, mismatches == 0, f"{mismatches} mismatches in {total_cases} instances")
    assert mismatches == 0


def test_criterion_6_wiener_beamformer(report):
    rng = np.random.default_rng(6)
    # residual of the loaded normal equations
    y = MultichannelWaveform(rng.standard_normal((2, 4000)))
    target = y.data[0] + np.roll(y.data[1], 3) + rng.standard_normal(4000)
    st = stack(y, 31)
    d = design_wiener(st, target)
    a, r = wiener_system(st, target)
    residual = np.linalg.norm(a @ d.taps - r) / np.linalg.norm(r)
    # scalar closed form
    ys = rng.standard_normal(3000)
    xs = 0.4 * ys + rng.standard_normal(3000)
    (out,), _ = beamform_from_estimates(MultichannelWaveform(ys), [xs], history=0)
    ryy = np.dot(ys, ys)
    closed = np.dot(xs, ys) / (ryy + 1e-5 * ryy) * ys
    scalar_err = np.max(np.abs(out.samples - closed))
    # beamformed vs masked on 2-channel mixtures with oracle targets
    sc = MixtureScenario(num_sources=2, seed=600, num_channels=2, source_kind="filtered_noise",
                         length=16000)
    bf_scores, mask_scores = [], []
    for i in range(20):
        ex = simulate_example(sc, i)
        refs = [im.reference().samples for im in ex.clean_images]
        outs, _ = beamform_from_estimates(ex.mixture, refs, history=255)
        masked = _mask_separate(ex.mixture.reference().samples, refs)
        bf_scores += [metric_sisdr(o, r) for o, r in zip(outs, refs)]
        mask_scores += [metric_sisdr(m, r) for m, r in zip(masked, refs)]
    bf_mean, mask_mean = float(np.mean(bf_scores)), float(np.mean(mask_scores))
    ok = residual < 1e-8 and scalar_err < 1e-10 and bf_mean >= mask_mean
    report(6, ok, f"residual {residual:.1e}, scalar error {scalar_err:.1e}, "
                  f"beamformed {bf_mean:.2f} dB vs masked {mask_mean:.2f} dB")
    assert residual < 1e-8
    assert scalar_err < 1e-10
    assert bf_mean >= mask_mean


def test_criterion_7_oracle_irm_end_to_end(report):
    start = time.perf_counter()
    sc = MixtureScenario(num_sources=2, seed=700, source_kind="filtered_noise", length=16000)
    gains = []
    for i in range(20):
        ex = simulate_example(sc, i)
        mix = ex.mixture.reference().samples
        refs = [im.reference().samples for im in ex.clean_images]
        ests = _mask_separate(mix, refs)
        for e, r in zip(ests, refs):
            gains.append(metric_sisdr(e, r) - metric_sisdr(mix, r))
    mean_gain = float(np.mean(gains))
    elapsed = time.perf_counter() - start
    report(7, mean_gain > 5 and elapsed < 60, f"mean SI-SDR improvement {mean_gain:.2f} dB, {elapsed:.2f} s")
    assert mean_gain > 5
    assert elapsed < 60


@pytest.mark.slow
def test_criterion_8_toy_autoencoder(report):
    start = time.perf_counter()
    config, init, cfg = toy_setup({})
    assert cfg["steps"] <= 2000 and cfg["feature_dim"] == 128
    assert (init.frame.window_len, init.frame.advance) == (32, 16)
    trace = train_autoencoder(config, init)
    score = float(np.mean(reconstruction_sisdr(trace.transform, config.batch)))
    again = train_autoencoder(*toy_setup({})[:2])
    deterministic = (again.losses == trace.losses and
                     np.array_equal(again.transform.encoder_kernels, trace.transform.encoder_kernels))
    elapsed = time.perf_counter() - start
    report(8, score > 20 and deterministic and elapsed < 300,
           f"reconstruction SI-SDR {score:.2f} dB after {len(trace.losses)} steps, "
           f"deterministic={deterministic}, {elapsed:.1f} s")
    assert score > 20
    assert deterministic
    assert elapsed < 300


def test_criterion_9_metric_sanity(report):
    rng = np.random.default_rng(9)
    worst_order = -np.inf
    worst_si_scale = worst_sdr_scale = 0.0
    for _ in range(500):
        x = rng.standard_normal(2048)
        h = rng.standard_normal(int(rng.integers(1, 20))) * rng.uniform(0.1, 1)
        xhat = np.convolve(x, h)[:2048] + rng.uniform(0.1, 2) * rng.standard_normal(2048)
        si, sdr = metric_sisdr(xhat, x), metric_sdr(xhat, x)
        worst_order = max(worst_order, si - sdr)
        c = rng.uniform(0.01, 100)
        worst_si_scale = max(worst_si_scale, abs(metric_sisdr(c * xhat, x) - si))
        worst_sdr_scale = max(worst_sdr_scale, abs(metric_sdr(c * xhat, x) - sdr))
    ok = worst_order <= 1e-9 and worst_si_scale < 1e-9 and worst_sdr_scale < 1e-9
    report(9, ok, f"max(SI-SDR - SDR) {worst_order:.2f} dB, scale drift SI-SDR "
                  f"{worst_si_scale:.1e}, SDR {worst_sdr_scale:.1e}")
    assert worst_order <= 1e-9
    assert worst_si_scale < 1e-9
    assert worst_sdr_scale < 1e-9


def test_criterion_10_simulation_exactness(report):
    sc = MixtureScenario(num_sources=3, seed=1000, length=4000, num_channels=2, rir_decay=0.7)
    exact = True
    worst = 0.0
    for i in range(100):
        ex = simulate_example(sc, i)
        total = ex.clean_images[0].data
        for im in ex.clean_images[1:]:
            total = total + im.data
        exact &= bool(np.array_equal(ex.mixture.data, total + ex.noise.data))
        worst = max(worst, float(np.max(np.abs(np.subtract(measured_sdrs(ex), ex.metadata["sdr_db"])))))
    report(10, exact and worst < 1e-6, f"bit-exact={exact}, max SDR deviation {worst:.1e} dB")
    assert exact
    assert worst < 1e-6
