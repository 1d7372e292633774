"""Training objectives with analytic gradients, and the PIT wrapper.

Every loss returns ``(LossValue, gradient)`` where the gradient is taken with
respect to the estimate and has the estimate's shape.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReference, ShapeError, TooManySources
from .signal_core import as_samples

DB = 10.0 / np.log(10.0)
SISDR_CAP = 60.0
SISDR_DEN_EPS = 1e-12
TLMSE_FLOOR_ENERGY = 1e-24
TLMSE_FLOOR = -240.0
MAX_PIT_SOURCES = 6


@dataclass
class LossValue:
    value: float
    per_source: list = field(default_factory=list)
    best_permutation: list = field(default_factory=list)
    aux: dict = field(default_factory=dict)


def _single(value, **aux):
    return LossValue(float(value), [float(value)], [0], aux)


def _pair(a, b):
    a = np.asarray(a.values if hasattr(a, "values") else a)
    b = np.asarray(b.values if hasattr(b, "values") else b)
    if a.shape != b.shape:
        raise ShapeError(f"estimate shape {a.shape} != reference shape {b.shape}")
    return a, b


def loss_pmse(xhat_mag, x_mag, theta_y, theta_k):
    """Phase-sensitive MSE: mean of (|Xhat| - |X| cos(theta_y - theta_k))**2."""
    xhat_mag, x_mag = _pair(xhat_mag, x_mag)
    theta_y, theta_k = np.asarray(theta_y), np.asarray(theta_k)
    if theta_y.shape != x_mag.shape or theta_k.shape != x_mag.shape:
        raise ShapeError("phase arrays must match the magnitude shape")
    diff = xhat_mag - x_mag * np.cos(theta_y - theta_k)
    n = diff.size
    return _single(np.sum(diff * diff) / n), 2.0 * diff / n


def loss_mse(xhat, x):
    """Mean squared error over all latent entries (works for real or complex arrays)."""
    xhat, x = _pair(xhat, x)
    diff = xhat - x
    n = diff.size
    return _single(np.sum(np.abs(diff) ** 2) / n), 2.0 * diff / n


def loss_tmse(xhat, x):
    xhat, x = _pair(as_samples(xhat), as_samples(x))
    diff = xhat - x
    n = diff.size
    return _single(np.dot(diff, diff) / n), 2.0 * diff / n


def loss_tlmse(xhat, x):
    """10 log10 of the summed squared error; floored at -240 dB."""
    xhat, x = _pair(as_samples(xhat), as_samples(x))
    diff = xhat - x
    energy = np.dot(diff, diff)
    if energy < TLMSE_FLOOR_ENERGY:
        return _single(TLMSE_FLOOR, floored=True), np.zeros_like(diff)
    return _single(DB * np.log(energy)), DB * 2.0 * diff / energy


def sisdr_parts(xhat, x):
    """Return ``(alpha, target_energy, error_energy)`` for the SI-SDR ratio."""
    xhat, x = _pair(as_samples(xhat), as_samples(x))
    ref_energy = np.dot(x, x)
    if ref_energy <= 0.0:
        raise DegenerateReference("reference signal has zero energy")
    alpha = np.dot(xhat, x) / ref_energy
    target = alpha * x
    err = target - xhat
    return alpha, np.dot(target, target), np.dot(err, err)


def loss_sisdr(xhat, x):
    """Negative SI-SDR in dB, clipped to [-60, 60].

    ``aux`` records alpha, beta = 1/alpha and whether the cap was hit. The
    gradient is zero on the capped branches.
    """
    xhat, x = _pair(as_samples(xhat), as_samples(x))
    alpha, s_energy, e_energy = sisdr_parts(xhat, x)
    beta = 1.0 / alpha if alpha != 0.0 else np.inf
    aux = {"alpha": float(alpha), "beta": float(beta), "capped": False}
    zero = np.zeros_like(xhat)
    if e_energy < SISDR_DEN_EPS * np.dot(xhat, xhat):
        aux["capped"] = True
        return _single(-SISDR_CAP, **aux), zero
    if s_energy <= 0.0:
        aux["capped"] = True
        return _single(SISDR_CAP, **aux), zero
    value = -DB * (np.log(s_energy) - np.log(e_energy))
    if abs(value) >= SISDR_CAP:
        aux["capped"] = True
        return _single(np.clip(value, -SISDR_CAP, SISDR_CAP), **aux), zero
    s = alpha * x
    e = s - xhat
    # d|s|^2 = 2 s, d|e|^2 = -2 e (e is orthogonal to x)
    grad = -DB * (2.0 * s / s_energy + 2.0 * e / e_energy)
    return _single(value, **aux), grad


def loss_sisdr_beta_form(xhat, x):
    """Same quantity written with beta = 1/alpha: -10 log10(|x|^2 / |x - beta xhat|^2). No caps."""
    xhat, x = _pair(as_samples(xhat), as_samples(x))
    alpha, _, _ = sisdr_parts(xhat, x)
    beta = 1.0 / alpha
    r = x - beta * xhat
    return -DB * (np.log(np.dot(x, x)) - np.log(np.dot(r, r)))


LOSSES = {
    "pmse": loss_pmse,
    "mse": loss_mse,
    "sisdr": loss_sisdr,
    "tlmse": loss_tlmse,
    "tmse": loss_tmse,
}


def _value(result):
    if isinstance(result, tuple):
        result = result[0]
    return float(result.value if isinstance(result, LossValue) else result)


def pair_loss_matrix(loss_fn, estimates, references):
    """C[k, j] = loss(estimate j, reference k)."""
    k = len(references)
    return np.array([[_value(loss_fn(estimates[j], references[r])) for j in range(k)]
                     for r in range(k)])


def pit(loss_fn, estimates, references) -> LossValue:
    """Permutation-invariant loss.

    ``best_permutation[k]`` is the estimate index assigned to reference k. Ties
    go to the lexicographically smallest permutation. ``loss_fn`` may return a
    LossValue, a ``(LossValue, grad)`` tuple or a float.
    """
    k = len(references)
    if len(estimates) != k:
        raise ShapeError(f"{len(estimates)} estimates for {k} references")
    if k < 1:
        raise ShapeError("need at least one source")
    if k > MAX_PIT_SOURCES:
        raise TooManySources(f"PIT search limited to {MAX_PIT_SOURCES} sources, got {k}")
    cost = pair_loss_matrix(loss_fn, estimates, references)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(k)):
        total = sum(cost[r, perm[r]] for r in range(k)) / k
        if best_perm is None or total < best:
            best, best_perm = total, perm
    per_source = [float(cost[r, best_perm[r]]) for r in range(k)]
    return LossValue(float(best), per_source, list(best_perm))
