"""Evaluation metrics: SI-SDR and a distortion-only BSSEval-style SDR."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from .errors import DegenerateReference, NumericalFailure, ShapeError, TooManySources
from .losses import MAX_PIT_SOURCES, SISDR_CAP, SISDR_DEN_EPS, sisdr_parts
from .signal_core import as_samples, dft, idft

SDR_LOADING = 1e-8
DEFAULT_FILTER_LEN = 512
SDR_METHOD = ("distortion-only projection onto filter_len delayed copies of the reference, "
              "truncated to the estimate length (single-source BSSEval v3 style, no SIR/SAR)")


def _db_ratio(num, den, scale_ref):
    if den < SISDR_DEN_EPS * scale_ref:
        return SISDR_CAP
    if num <= 0.0:
        return -SISDR_CAP
    return float(np.clip(10.0 * np.log10(num / den), -SISDR_CAP, SISDR_CAP))


def metric_sisdr(xhat, x) -> float:
    """SI-SDR in dB, clipped to [-60, 60]."""
    xhat = as_samples(xhat)
    _, s_energy, e_energy = sisdr_parts(xhat, x)
    return _db_ratio(s_energy, e_energy, np.dot(xhat, xhat))


def _correlate(a, b, lags):
    """c[k] = sum_t a[t] b[t - k] for k in [0, lags), via zero-padded FFT."""
    n = len(a) + len(b)
    size = 1 << (n - 1).bit_length()
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[:len(a)] = a
    pb[:len(b)] = b
    full = idft(dft(pa) * np.conj(dft(pb)), size)
    return full[:lags]


def sdr_projection(xhat, x, filter_len=DEFAULT_FILTER_LEN):
    """Least-squares FIR fit of x onto xhat; returns ``(projection, taps)``.

    The delayed copies of x are truncated to len(x), so the Gram matrix is the
    Toeplitz autocorrelation minus an edge correction.
    """
    xhat, x = as_samples(xhat), as_samples(x)
    if xhat.shape != x.shape:
        raise ShapeError(f"estimate length {xhat.shape} != reference length {x.shape}")
    if len(x) < filter_len:
        raise ShapeError(f"signal length {len(x)} shorter than filter_len {filter_len}")
    if np.dot(x, x) <= 0.0:
        raise DegenerateReference("reference signal has zero energy")
    autocorr = _correlate(x, x, filter_len)
    gram = kernels.truncated_delay_gram(np.ascontiguousarray(x), filter_len, autocorr)
    cross = _correlate(xhat, x, filter_len)
    gram = gram + SDR_LOADING * np.trace(gram) / filter_len * np.eye(filter_len)
    try:
        taps = linalg.cho_solve(linalg.cho_factor(gram), cross)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"SDR normal equations not positive definite: {exc}") from None
    if not np.all(np.isfinite(taps)):
        raise NumericalFailure("SDR projection produced non-finite taps")
    n = len(x)
    size = 1 << (n + filter_len - 1).bit_length()
    px = np.zeros(size)
    pt = np.zeros(size)
    px[:n] = x
    pt[:filter_len] = taps
    proj = idft(dft(px) * dft(pt), size)[:n]
    return proj, taps


def metric_sdr(xhat, x, filter_len=DEFAULT_FILTER_LEN) -> float:
    """10 log10(|proj|^2 / |xhat - proj|^2), clipped to [-60, 60]."""
    xhat = as_samples(xhat)
    proj, _ = sdr_projection(xhat, x, filter_len)
    err = xhat - proj
    return _db_ratio(np.dot(proj, proj), np.dot(err, err), np.dot(xhat, xhat))


@dataclass
class EvalReport:
    si_sdr_db: list
    sdr_db: list
    input_si_sdr_db: list
    input_sdr_db: list
    si_sdr_improvement_db: list
    sdr_improvement_db: list
    permutation: list
    mean_si_sdr_db: float = 0.0
    mean_sdr_db: float = 0.0
    mean_si_sdr_improvement_db: float = 0.0
    mean_sdr_improvement_db: float = 0.0
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def evaluate(estimates, references, mixture=None, filter_len=DEFAULT_FILTER_LEN) -> EvalReport:
    """Score estimates against references after aligning them by mean SI-SDR.

    Per-source lists are indexed by reference; ``permutation[k]`` is the
    estimate matched to reference k. Input scores use ``mixture`` (default:
    the sum of the references).
    """
    refs = [as_samples(r) for r in references]
    ests = [as_samples(e) for e in estimates]
    k = len(refs)
    if len(ests) != k:
        raise ShapeError(f"{len(ests)} estimates for {k} references")
    if k > MAX_PIT_SOURCES:
        raise TooManySources(f"at most {MAX_PIT_SOURCES} sources, got {k}")
    mix = np.sum(refs, axis=0) if mixture is None else as_samples(mixture)
    flen = min(filter_len, len(refs[0]))
    score = np.array([[metric_sisdr(ests[j], refs[r]) for j in range(k)] for r in range(k)])
    best, perm = -np.inf, None
    for p in itertools.permutations(range(k)):
        total = sum(score[r, p[r]] for r in range(k)) / k
        if perm is None or total > best:
            best, perm = total, p
    si = [float(score[r, perm[r]]) for r in range(k)]
    sdr = [metric_sdr(ests[perm[r]], refs[r], flen) for r in range(k)]
    in_si = [metric_sisdr(mix, refs[r]) for r in range(k)]
    in_sdr = [metric_sdr(mix, refs[r], flen) for r in range(k)]
    si_imp = [a - b for a, b in zip(si, in_si)]
    sdr_imp = [a - b for a, b in zip(sdr, in_sdr)]
    return EvalReport(
        si_sdr_db=si, sdr_db=sdr, input_si_sdr_db=in_si, input_sdr_db=in_sdr,
        si_sdr_improvement_db=si_imp, sdr_improvement_db=sdr_imp, permutation=list(perm),
        mean_si_sdr_db=float(np.mean(si)), mean_sdr_db=float(np.mean(sdr)),
        mean_si_sdr_improvement_db=float(np.mean(si_imp)),
        mean_sdr_improvement_db=float(np.mean(sdr_imp)),
        metadata={"sdr_method": SDR_METHOD, "filter_len": flen, "cap_db": SISDR_CAP},
    )
