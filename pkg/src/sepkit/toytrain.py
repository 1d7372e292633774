"""Full-batch gradient descent on learned encoder/decoder kernels (autoencoder only)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, ShapeError
from .losses import loss_sisdr, loss_tlmse, loss_tmse
from .signal_core import as_samples, frame, overlap_add
from .transforms import TransformSpec

TRAIN_LOSSES = {"tlmse": loss_tlmse, "tmse": loss_tmse, "sisdr": loss_sisdr}
DIVERGENCE_LIMIT = 1e6


@dataclass
class TrainConfig:
    batch: list
    steps: int = 2000
    step_size: float = 1e-2
    plateau_patience: int = 50
    loss: str = "tlmse"
    seed: int = 0

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if self.loss not in TRAIN_LOSSES:
            raise ValueError(f"loss must be one of {sorted(TRAIN_LOSSES)}")
        if not self.batch:
            raise ValueError("batch must not be empty")


@dataclass
class TrainTrace:
    losses: list
    transform: TransformSpec
    step_sizes: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss", "step_size"])
            for i, (l, s) in enumerate(zip(self.losses, self.step_sizes)):
                w.writerow([i, repr(float(l)), repr(float(s))])


def autoencoder_loss_and_grads(u, v, frames_list, targets, spec, loss_fn):
    """Mean per-signal loss of decode(encode(x)) against x, with kernel gradients.

    ``u`` is the F x L_w encoder, ``v`` the L_w x F decoder. ReLU subgradient
    at 0 is 0.
    """
    total = 0.0
    gu = np.zeros_like(u)
    gv = np.zeros_like(v)
    n = len(targets)
    for frames, x in zip(frames_list, targets):
        z = frames @ u.T
        a = np.maximum(z, 0.0)
        synth = a @ v.T
        xhat = overlap_add(synth, spec, len(x))
        value, g = loss_fn(xhat, x)
        total += value.value
        # adjoint of overlap-add is framing
        dsynth = frame(g, spec).frames if len(g) >= spec.window_len else np.zeros_like(synth)
        dsynth = dsynth[: synth.shape[0]]
        gv += dsynth.T @ a
        dz = (dsynth @ v) * (z > 0.0)
        gu += dz.T @ frames
    return total / n, gu / n, gv / n


def train_autoencoder(config: TrainConfig, init: TransformSpec) -> TrainTrace:
    """Minimize the configured time-domain loss of the learned codec's reconstruction.

    Plain gradient descent with two safeguards: a step that raises the loss is
    rejected and the step size halved, and the step size is also halved when the
    best loss has not improved for ``plateau_patience`` steps. The recorded trace
    is therefore non-increasing.
    """
    if init.kind != "learned":
        raise ValueError("toy training needs a learned transform")
    spec = init.frame
    if init.feature_dim < spec.window_len:
        raise ShapeError("feature_dim must be >= window_len for the ReLU codec to invert")
    loss_fn = TRAIN_LOSSES[config.loss]
    targets = [np.array(as_samples(x)) for x in config.batch]
    # trim so frames tile each signal exactly
    targets = [x[: spec.covered_length(spec.num_frames(len(x)))] for x in targets]
    frames_list = [frame(x, spec).frames for x in targets]
    u = np.array(init.encoder_kernels)
    v = np.array(init.decoder_kernels)
    step = float(config.step_size)
    loss, gu, gv = autoencoder_loss_and_grads(u, v, frames_list, targets, spec, loss_fn)
    losses, steps = [loss], [step]
    best, since_best = loss, 0
    for _ in range(config.steps - 1):
        cand_u, cand_v = u - step * gu, v - step * gv
        c_loss, c_gu, c_gv = autoencoder_loss_and_grads(cand_u, cand_v, frames_list, targets,
                                                         spec, loss_fn)
        if not np.isfinite(c_loss) or c_loss > DIVERGENCE_LIMIT:
            raise Diverged(f"loss reached {c_loss} at step {len(losses)}")
        if c_loss <= loss:
            u, v, loss, gu, gv = cand_u, cand_v, c_loss, c_gu, c_gv
        else:
            step *= 0.5
        if loss < best:
            best, since_best = loss, 0
        else:
            since_best += 1
            if since_best >= config.plateau_patience:
                step *= 0.5
                since_best = 0
        losses.append(loss)
        steps.append(step)
    return TrainTrace(losses, init.with_kernels(u, v), steps)
