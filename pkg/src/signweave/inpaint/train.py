"""Training loop for the boundary-inpainting denoiser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import neuralkit as nk
from ..neuralkit import Tensor
from .denoiser import Denoiser
from .losses import LossConfig, combined_loss
from .masks import RADIUS_MAX, RADIUS_MIN, make_boundary_mask, sample_radius
from .schedule import DiffusionSchedule, min_snr_weight, q_sample


@dataclass
class PairItem:
    """One training pair: clean pseudo input and duration-aligned target."""

    x_tilde: np.ndarray
    x0: np.ndarray
    boundary_index: int

    def __post_init__(self):
        if self.x_tilde.shape != self.x0.shape:
            raise ValueError("pseudo input and aligned target must have equal shapes")
        if not 0 < self.boundary_index < self.x_tilde.shape[0]:
            raise ValueError("boundary index must be interior")


@dataclass
class InpaintTrainConfig:
    lr: float = 3e-4
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    grad_clip: float = 1.0
    ema_decay: float = 0.9999
    batch_size: int = 16
    steps: int = 1500
    radius_min: int = RADIUS_MIN
    radius_max: int = RADIUS_MAX
    seed: int = 0


def sample_step_loss(
    item: PairItem,
    denoiser: Denoiser,
    schedule: DiffusionSchedule,
    loss_cfg: LossConfig,
    t: int,
    radius: int,
    noise: np.ndarray,
    part_weights: np.ndarray,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Single-sample objective at a fixed timestep/radius/noise draw."""
    mask = make_boundary_mask(item.boundary_index, item.x0.shape[0] - item.boundary_index, radius)
    x_t = q_sample(item.x0, t, noise, schedule)
    x0_hat = denoiser.forward(x_t, t, item.x_tilde, mask.values, rng=rng, training=training)
    w_t = min_snr_weight(t, schedule, loss_cfg.min_snr_gamma)
    return combined_loss(x0_hat, item.x0, mask.values, part_weights, w_t, loss_cfg)


def batch_loss(
    batch: list[PairItem],
    denoiser: Denoiser,
    schedule: DiffusionSchedule,
    loss_cfg: LossConfig,
    rng: np.random.Generator,
    radius_range: tuple[int, int] = (RADIUS_MIN, RADIUS_MAX),
    training: bool = False,
) -> Tensor:
    """Mean objective over a batch with per-item t, radius, and noise draws."""
    part_weights = loss_cfg.part_weights(denoiser.layout)
    terms = []
    for item in batch:
        t = int(rng.integers(1, schedule.num_steps + 1))
        radius = sample_radius(rng, *radius_range)
        noise = rng.standard_normal(item.x0.shape)
        terms.append(sample_step_loss(item, denoiser, schedule, loss_cfg, t, radius, noise,
                                      part_weights, rng=rng, training=training))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def train_inpainter(
    pairs: list[PairItem],
    denoiser: Denoiser,
    schedule: DiffusionSchedule | None = None,
    cfg: InpaintTrainConfig = InpaintTrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
) -> list[float]:
    """Seeded single-coordinator training; returns the per-step loss history."""
    if schedule is None:
        schedule = DiffusionSchedule()
    rng = np.random.default_rng(cfg.seed)
    denoiser.params.ema_decay = cfg.ema_decay
    opt = nk.AdamW(denoiser.params, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    history = []
    n = len(pairs)
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        batch = [pairs[i] for i in idx]
        loss = batch_loss(batch, denoiser, schedule, loss_cfg, rng,
                          (cfg.radius_min, cfg.radius_max), training=True)
        denoiser.params.zero_grad()
        loss.backward()
        denoiser.params.clip_grad_norm(cfg.grad_clip)
        opt.step(lr=nk.cosine_lr(step, cfg.steps, cfg.lr))
        denoiser.params.ema_update()
        history.append(loss.item())
    return history
