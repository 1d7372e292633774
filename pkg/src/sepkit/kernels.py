"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names (``fft_batch``, ``overlap_add_frames``, ``stack_history``,
``truncated_delay_gram``) are bound to the numba variants unless
``SEPKIT_DISABLE_NUMBA`` is set. Both variants stay importable through
``NUMPY_KERNELS`` and ``NUMBA_KERNELS`` so tests and the benchmark can compare
them directly.
"""
import numpy as np

from ._accel import HAS_NUMBA, USE_NUMBA, njit


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _twiddles(n, inverse):
    # one exp per table entry (no recurrence) keeps the error at a few ulp
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(n // 2) / n)


# ---------------------------------------------------------------------------
# radix-2 FFT
# ---------------------------------------------------------------------------

def _fft_batch_numpy(x, inverse=False):
    """Unnormalized radix-2 DIT FFT along the last axis of a 2-D complex array."""
    batch, n = x.shape
    if n == 1:
        return x.copy()
    tw = _twiddles(n, inverse)
    out = x[:, _bit_reverse_indices(n)]
    m = 1
    while m < n:
        blocks = out.reshape(batch, n // (2 * m), 2, m)
        w = tw[:: n // (2 * m)][:m]
        even = blocks[:, :, 0, :]
        odd = blocks[:, :, 1, :] * w
        out = np.concatenate((even + odd, even - odd), axis=2).reshape(batch, n)
        m *= 2
    return out


@njit
def _fft_core_numba(out, rev, tw):
    batch, n = out.shape
    tmp = np.empty(n, dtype=np.complex128)
    for b in range(batch):
        for i in range(n):
            tmp[i] = out[b, rev[i]]
        m = 1
        while m < n:
            step = n // (2 * m)
            for start in range(0, n, 2 * m):
                for k in range(m):
                    t = tw[k * step] * tmp[start + m + k]
                    u = tmp[start + k]
                    tmp[start + k] = u + t
                    tmp[start + m + k] = u - t
            m *= 2
        for i in range(n):
            out[b, i] = tmp[i]


def _fft_batch_numba(x, inverse=False):
    batch, n = x.shape
    out = np.ascontiguousarray(x, dtype=np.complex128).copy()
    if n == 1:
        return out
    _fft_core_numba(out, _bit_reverse_indices(n), _twiddles(n, inverse))
    return out


# ---------------------------------------------------------------------------
# overlap-add
# ---------------------------------------------------------------------------

def _overlap_add_numpy(frames, hop, out_len):
    n_frames, width = frames.shape
    full = width + (n_frames - 1) * hop
    n_phase = -(-width // hop)
    buf = np.zeros(n_phase * hop + n_frames * hop, dtype=frames.dtype)
    for j in range(n_phase):
        chunk = frames[:, j * hop:min((j + 1) * hop, width)]
        if chunk.shape[1] < hop:
            chunk = np.pad(chunk, ((0, 0), (0, hop - chunk.shape[1])))
        buf[j * hop:j * hop + n_frames * hop] += chunk.reshape(-1)
    out = np.zeros(out_len, dtype=frames.dtype)
    n = min(out_len, full)
    out[:n] = buf[:n]
    return out


@njit
def _overlap_add_numba(frames, hop, out_len):
    n_frames, width = frames.shape
    out = np.zeros(out_len, dtype=frames.dtype)
    for ell in range(n_frames):
        base = ell * hop
        for i in range(width):
            t = base + i
            if t < out_len:
                out[t] += frames[ell, i]
    return out


# ---------------------------------------------------------------------------
# multichannel history stacking
# ---------------------------------------------------------------------------

def _stack_history_numpy(y, lag):
    n_ch, n = y.shape
    padded = np.concatenate((np.zeros((n_ch, lag)), y), axis=1)
    out = np.empty((n, n_ch * (lag + 1)))
    for j in range(lag + 1):
        out[:, j * n_ch:(j + 1) * n_ch] = padded[:, j:j + n].T
    return out


@njit
def _stack_history_numba(y, lag):
    n_ch, n = y.shape
    out = np.zeros((n, n_ch * (lag + 1)))
    for t in range(n):
        for j in range(lag + 1):
            src = t - lag + j
            if src >= 0:
                for d in range(n_ch):
                    out[t, j * n_ch + d] = y[d, src]
    return out


# ---------------------------------------------------------------------------
# Gram matrix of delayed, length-truncated copies of a signal
# ---------------------------------------------------------------------------

def _truncated_delay_gram_numpy(x, taps, autocorr):
    """G[i, j] = sum_t x[t - i] x[t - j] over 0 <= t < len(x).

    ``autocorr[k]`` must hold the full-length autocorrelation at lag k; the
    edge correction for the samples that fall off the end is O(taps**2).
    """
    n = x.shape[0]
    tail = x[n - taps:]
    lags = np.arange(taps)
    pos = np.arange(taps)
    src = pos[None, :] + lags[:, None]
    valid = src < taps
    prod = np.where(valid, tail[None, :] * tail[np.minimum(src, taps - 1)], 0.0)
    # rcum[k, s] = sum_{u >= s} prod[k, u]; trailing zero column for s = taps
    rcum = np.zeros((taps, taps + 1))
    rcum[:, :taps] = np.cumsum(prod[:, ::-1], axis=1)[:, ::-1]
    i_idx, j_idx = np.meshgrid(lags, lags, indexing="ij")
    k = np.abs(i_idx - j_idx)
    hi = np.maximum(i_idx, j_idx)
    return autocorr[k] - rcum[k, taps - hi]


@njit
def _truncated_delay_gram_numba(x, taps, autocorr):
    n = x.shape[0]
    g = np.empty((taps, taps))
    for k in range(taps):
        # walk down diagonal k, peeling one product off the end per step
        acc = autocorr[k]
        g[k, 0] = acc
        g[0, k] = acc
        for j in range(1, taps - k):
            i = j + k
            s = n - i
            acc -= x[s] * x[s + k]
            g[i, j] = acc
            g[j, i] = acc
    return g


NUMPY_KERNELS = {
    "fft_batch": _fft_batch_numpy,
    "overlap_add_frames": _overlap_add_numpy,
    "stack_history": _stack_history_numpy,
    "truncated_delay_gram": _truncated_delay_gram_numpy,
}

NUMBA_KERNELS = {
    "fft_batch": _fft_batch_numba,
    "overlap_add_frames": _overlap_add_numba,
    "stack_history": _stack_history_numba,
    "truncated_delay_gram": _truncated_delay_gram_numba,
} if HAS_NUMBA else dict(NUMPY_KERNELS)

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
BACKEND = "numba" if USE_NUMBA else "numpy"

fft_batch = _active["fft_batch"]
overlap_add_frames = _active["overlap_add_frames"]
stack_history = _active["stack_history"]
truncated_delay_gram = _active["truncated_delay_gram"]
