"""Network kernels built on the autodiff tensor: dense, norm, attention, RoPE."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, softmax, stack

SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if len(x.shape) > 2:
        # one flat GEMM instead of a batched matmul loop
        lead = x.shape[:-1]
        out = x.reshape(-1, x.shape[-1]) @ weight
        out = out.reshape(*lead, weight.shape[-1])
    else:
        out = x @ weight
    if bias is not None:
        out = out + bias
    return out


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    inner = (x + (x**3) * 0.044715) * SQRT_2_OVER_PI
    return x * 0.5 * (inner.tanh() + 1.0)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


def rope_apply(x: Tensor, positions: np.ndarray, base: float = 10000.0) -> Tensor:
    """Rotary position embedding over the last axis (pairs of even/odd dims).

    x has shape (..., T, d) with d even; positions has shape (T,).
    """
    d = x.shape[-1]
    if d % 2 != 0:
        raise ValueError("rope requires an even feature dimension")
    freqs = 1.0 / (base ** (np.arange(0, d, 2, dtype=np.float64) / d))
    angles = np.asarray(positions, dtype=np.float64)[:, None] * freqs[None, :]
    cos = np.cos(angles).astype(x.dtype)
    sin = np.sin(angles).astype(x.dtype)

    even = x[..., 0::2]
    odd = x[..., 1::2]
    cos_t, sin_t = Tensor(cos), Tensor(sin)
    r_even = even * cos_t - odd * sin_t
    r_odd = even * sin_t + odd * cos_t
    # interleave back: stack pairs on a trailing axis then flatten
    paired = stack([r_even, r_odd], axis=-1)
    return paired.reshape(*x.shape)


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    causal: bool = False,
    key_padding_mask: np.ndarray | None = None,
) -> Tensor:
    """Attention over shapes (..., T_q, d) x (..., T_k, d) -> (..., T_q, d_v).

    key_padding_mask is a boolean array over T_k, True for valid keys.
    """
    d = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d))
    bias = np.zeros(scores.shape, dtype=scores.dtype)
    if causal:
        t_q, t_k = scores.shape[-2], scores.shape[-1]
        future = np.triu(np.ones((t_q, t_k), dtype=bool), k=1)
        bias = bias + np.where(future, -1e9, 0.0)
    if key_padding_mask is not None:
        invalid = ~np.asarray(key_padding_mask, dtype=bool)
        bias = bias + np.where(invalid, -1e9, 0.0)
    if np.any(bias):
        scores = scores + Tensor(bias)
    attn = softmax(scores, axis=-1)
    return attn @ v


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor(keep)


class ParameterSet:
    """Named parameter tensors with gradient slots and EMA shadow copies."""

    def __init__(self, dtype=np.float32, ema_decay: float = 0.9999):
        if not 0.0 <= ema_decay < 1.0:
            raise ValueError("ema decay must lie in [0, 1)")
        self.dtype = dtype
        self.ema_decay = ema_decay
        self._params: dict[str, Tensor] = {}
        self._ema: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        t.name = name
        self._params[name] = t
        self._ema[name] = t.data.copy()
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def ema_update(self, decay: float | None = None) -> None:
        d = self.ema_decay if decay is None else decay
        for name, t in self._params.items():
            shadow = self._ema[name]
            shadow *= d
            shadow += (1.0 - d) * t.data

    def ema_value(self, name: str) -> np.ndarray:
        return self._ema[name]

    def swap_in_ema(self) -> dict[str, np.ndarray]:
        """Replace live values with EMA values; returns the originals."""
        saved = {}
        for name, t in self._params.items():
            saved[name] = t.data
            t.data = self._ema[name].copy()
        return saved

    def restore(self, saved: dict[str, np.ndarray]) -> None:
        for name, data in saved.items():
            self._params[name].data = data

    def global_grad_norm(self) -> float:
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: float) -> float:
        norm = self.global_grad_norm()
        if norm > max_norm and norm > 0:
            scale = max_norm / norm
            for t in self._params.values():
                if t.grad is not None:
                    t.grad = t.grad * scale  # reassign: the buffer may be shared
        return norm


def init_dense(params: ParameterSet, name: str, fan_in: int, fan_out: int,
               rng: np.random.Generator, scale: float | None = None,
               zero: bool = False) -> tuple[Tensor, Tensor]:
    """Weight + bias pair; zero=True gives an identity-output head."""
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        std = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        w = rng.normal(0.0, std, size=(fan_in, fan_out))
    weight = params.add(f"{name}.weight", w)
    bias = params.add(f"{name}.bias", np.zeros(fan_out))
    return weight, bias


def init_layer_norm(params: ParameterSet, name: str, dim: int) -> tuple[Tensor, Tensor]:
    gamma = params.add(f"{name}.gamma", np.ones(dim))
    beta = params.add(f"{name}.beta", np.zeros(dim))
    return gamma, beta


def sinusoidal_embedding(values: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic sinusoidal embedding of scalar positions/timesteps, shape (N, dim)."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = values[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2 == 1:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb
