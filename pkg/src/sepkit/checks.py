"""Loss identity and gradient-vs-finite-difference suites (backing ``sepkit losscheck``)."""
from __future__ import annotations

import numpy as np

from .losses import loss_mse, loss_pmse, loss_sisdr, loss_sisdr_beta_form, loss_tlmse, loss_tmse

IDENTITY_TOL_DB = 1e-9
GRADIENT_TOL = 1e-5
FD_STEP = 1e-5


def random_pair(rng, n):
    """Correlated (xhat, x) pair whose SI-SDR stays well inside the caps."""
    x = rng.standard_normal(n)
    c = rng.uniform(0.3, 2.0) * rng.choice((-1.0, 1.0))
    xhat = c * x + rng.uniform(0.2, 2.0) * rng.standard_normal(n)
    return xhat, x


def identity_errors(xhat, x):
    """Return (alpha-vs-beta form error, SI-SDR vs shifted T-LMSE error), both in dB."""
    value, _ = loss_sisdr(xhat, x)
    beta = value.aux["beta"]
    beta_form = loss_sisdr_beta_form(xhat, x)
    shifted = loss_tlmse(beta * xhat, x)[0].value - 10.0 * np.log10(np.dot(x, x))
    return abs(value.value - beta_form), abs(value.value - shifted)


def central_difference(f, point, step):
    grad = np.zeros_like(point)
    flat = point.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f(point)
        flat[i] = old - step
        down = f(point)
        flat[i] = old
        g[i] = (up - down) / (2.0 * step)
    return grad


def gradient_error(analytic, numeric):
    """max |analytic - numeric| / max |analytic|."""
    scale = np.max(np.abs(analytic))
    if scale == 0.0:
        return float(np.max(np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _instance(name, rng, n, shape):
    """Return ``(loss_of_estimate, estimate)`` for one random case of loss ``name``."""
    if name == "pmse":
        target = rng.uniform(0.1, 2.0, size=shape)
        est = rng.uniform(0.1, 2.0, size=shape)
        ty, tk = rng.uniform(-np.pi, np.pi, size=(2,) + shape)
        return (lambda e: loss_pmse(e, target, ty, tk)), est
    if name == "mse":
        target = rng.standard_normal(shape)
        return (lambda e: loss_mse(e, target)), rng.standard_normal(shape)
    xhat, x = random_pair(rng, n)
    fn = {"sisdr": loss_sisdr, "tlmse": loss_tlmse, "tmse": loss_tmse}[name]
    return (lambda e: fn(e, x)), xhat


GRADIENT_LOSSES = ("pmse", "mse", "sisdr", "tlmse", "tmse")


def run_losscheck(seed=0, n_pairs=1000, n_grad=100, length=64, latent_shape=(6, 9),
                  broken_gradient=None):
    """Run both suites; ``broken_gradient`` names a loss whose gradient is corrupted (negative control)."""
    rng = np.random.default_rng(seed)
    violations = []
    eq10_max = rel_max = 0.0
    for i in range(n_pairs):
        xhat, x = random_pair(rng, length)
        e10, erel = identity_errors(xhat, x)
        eq10_max, rel_max = max(eq10_max, e10), max(rel_max, erel)
        if e10 >= IDENTITY_TOL_DB or erel >= IDENTITY_TOL_DB:
            violations.append({"suite": "identity", "case": i, "alpha_beta_err_db": float(e10),
                               "tlmse_relation_err_db": float(erel), "x": x.tolist(),
                               "xhat": xhat.tolist()})
    grad_max = {}
    for name in GRADIENT_LOSSES:
        worst = 0.0
        for i in range(n_grad):
            fn, est = _instance(name, rng, length, tuple(latent_shape))
            _, analytic = fn(est)
            if name == broken_gradient:
                analytic = analytic * 1.01
            step = FD_STEP * max(float(np.sqrt(np.mean(est * est))), 1e-3)
            numeric = central_difference(lambda e: fn(e)[0].value, est.copy(), step)
            err = gradient_error(analytic, numeric)
            worst = max(worst, err)
            if err >= GRADIENT_TOL:
                violations.append({"suite": "gradient", "loss": name, "case": i,
                                   "relative_error": err, "estimate": est.tolist()})
        grad_max[name] = worst
    return {
        "seed": seed,
        "identity_pairs": n_pairs,
        "max_alpha_beta_err_db": float(eq10_max),
        "max_tlmse_relation_err_db": float(rel_max),
        "gradient_instances": n_grad,
        "max_relative_gradient_error": grad_max,
        "tolerances": {"identity_db": IDENTITY_TOL_DB, "gradient_relative": GRADIENT_TOL},
        "violations": violations,
        "ok": not violations,
    }
