"""DDPM noise schedule bookkeeping and Min-SNR loss weighting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DiffusionSchedule:
    """Linear-beta forward process over t in [1, num_steps].

    alpha_bar is indexed so that alpha_bar[t] is the cumulative product at
    timestep t, with alpha_bar[0] = 1 (the clean signal).
    """

    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            raise ValueError("beta range must satisfy 0 < start < end < 1")
        self.betas = np.linspace(self.beta_start, self.beta_end, self.num_steps)
        self.alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - self.betas)])
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")

    def snr(self, t: int) -> float:
        ab = self.alpha_bar[t]
        return float(ab / (1.0 - ab))

    def respaced_steps(self, s: int) -> list[int]:
        """s timesteps evenly spaced over [1, num_steps], descending."""
        if not 1 <= s <= self.num_steps:
            raise ValueError(f"step count must lie in [1, {self.num_steps}]")
        steps = np.unique(np.round(np.linspace(1, self.num_steps, s)).astype(int))
        return steps[::-1].tolist()


def q_sample(x0: np.ndarray, t: int, noise: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """Forward diffusion: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise."""
    if not 1 <= t <= schedule.num_steps:
        raise ValueError(f"t must lie in [1, {schedule.num_steps}]")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def min_snr_weight(t: int, schedule: DiffusionSchedule, gamma: float = 5.0) -> float:
    """min(SNR(t), gamma) / SNR(t); large-SNR (low-noise) steps are downweighted."""
    snr = schedule.snr(t)
    return min(snr, gamma) / snr
