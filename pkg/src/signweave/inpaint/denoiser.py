"""Conditional Transformer denoiser predicting clean motion from a noisy target.

The noisy target stream is decoded with RoPE self-attention and cross-attention
over conditioning tokens projected from the clean duration-adjusted input; the
output is produced by part-specific heads (a deeper one for the hands).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import neuralkit as nk
from ..neuralkit import ParameterSet, Tensor
from ..motion import PartLayout


@dataclass(frozen=True)
class DenoiserConfig:
    motion_dim: int = 206
    latent: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 128
    hand_head_depth: int = 2
    dropout: float = 0.0
    # predict the clean motion as conditioning + correction; the zero-initialized
    # heads then start from the copy solution and learn only the refinement
    residual_conditioning: bool = True
    dtype: type = np.float32


def _group_slices(layout: PartLayout) -> dict[str, tuple[int, int]]:
    """Contiguous (start, stop) slice per coarse group, in feature order."""
    slices = {}
    for group in ("body", "face", "hand"):
        idx = layout.group_indices(group)
        if not np.array_equal(idx, np.arange(idx[0], idx[-1] + 1)):
            raise ValueError(f"group {group} is not contiguous in this layout")
        slices[group] = (int(idx[0]), int(idx[-1]) + 1)
    ordered = sorted(slices.items(), key=lambda kv: kv[1][0])
    if [k for k, _ in ordered] != ["body", "face", "hand"]:
        raise ValueError("expected body/face/hand group order along the feature axis")
    return slices


class Denoiser:
    def __init__(self, cfg: DenoiserConfig = DenoiserConfig(), layout: PartLayout | None = None, seed: int = 0):
        self.cfg = cfg
        self.layout = layout if layout is not None else PartLayout.base()
        if self.layout.dim != cfg.motion_dim:
            raise ValueError("layout dim does not match motion_dim")
        self.group_slices = _group_slices(self.layout)
        self.params = ParameterSet(dtype=cfg.dtype)
        rng = np.random.default_rng(seed)
        h = cfg.latent
        p = self.params
        self._in_proj = nk.init_dense(p, "in_proj", cfg.motion_dim, h, rng)
        self._cond_proj = nk.init_dense(p, "cond_proj", cfg.motion_dim, h, rng)
        self._mask_embed = p.add("mask_embed", rng.normal(0.0, 0.02, size=(2, h)))
        self._t1 = nk.init_dense(p, "time.0", h, h, rng)
        self._t2 = nk.init_dense(p, "time.1", h, h, rng)
        self._blocks = []
        for i in range(cfg.layers):
            blk = {
                "ln1": nk.init_layer_norm(p, f"blk{i}.ln1", h),
                "qkv": nk.init_dense(p, f"blk{i}.qkv", h, 3 * h, rng),
                "self_out": nk.init_dense(p, f"blk{i}.self_out", h, h, rng),
                "ln_x": nk.init_layer_norm(p, f"blk{i}.ln_x", h),
                "q": nk.init_dense(p, f"blk{i}.q", h, h, rng),
                "kv": nk.init_dense(p, f"blk{i}.kv", h, 2 * h, rng),
                "cross_out": nk.init_dense(p, f"blk{i}.cross_out", h, h, rng),
                "ln2": nk.init_layer_norm(p, f"blk{i}.ln2", h),
                "ff1": nk.init_dense(p, f"blk{i}.ff1", h, cfg.ffn, rng),
                "ff2": nk.init_dense(p, f"blk{i}.ff2", cfg.ffn, h, rng),
            }
            self._blocks.append(blk)
        self._ln_final = nk.init_layer_norm(p, "ln_final", h)
        self._heads = {}
        for group, (lo, hi) in self.group_slices.items():
            depth = cfg.hand_head_depth if group == "hand" else 1
            layers = []
            for d in range(depth - 1):
                layers.append(nk.init_dense(p, f"head.{group}.{d}", h, h, rng))
            layers.append(nk.init_dense(p, f"head.{group}.out", h, hi - lo, rng,
                                        zero=cfg.residual_conditioning))
            self._heads[group] = layers

    def _split_heads(self, x: Tensor, t: int) -> Tensor:
        heads = self.cfg.heads
        dh = self.cfg.latent // heads
        return x.reshape(t, heads, dh).transpose(1, 0, 2)  # (H, T, dh)

    def _merge_heads(self, x: Tensor, t: int) -> Tensor:
        return x.transpose(1, 0, 2).reshape(t, self.cfg.latent)

    def forward(
        self,
        x_t: np.ndarray,
        t: int,
        cond: np.ndarray,
        mask: np.ndarray,
        rng: np.random.Generator | None = None,
        training: bool = False,
    ) -> Tensor:
        cfg = self.cfg
        dtype = self.params.dtype
        t_len = x_t.shape[0]
        c_len = cond.shape[0]
        positions = np.arange(t_len)

        tok = nk.dense(nk.tensor(np.asarray(x_t, dtype=dtype)), *self._in_proj)
        t_emb = nk.tensor(nk.sinusoidal_embedding(np.array([float(t)]), cfg.latent).astype(dtype))
        t_emb = nk.dense(nk.gelu(nk.dense(t_emb, *self._t1)), *self._t2)
        mask_idx = (np.asarray(mask) > 0.5).astype(int)
        tok = tok + t_emb + self._mask_embed[mask_idx]

        memory = nk.dense(nk.tensor(np.asarray(cond, dtype=dtype)), *self._cond_proj)
        x = tok
        for blk in self._blocks:
            normed = nk.layer_norm(x, *blk["ln1"])
            qkv = nk.dense(normed, *blk["qkv"])
            q = self._split_heads(qkv[:, : cfg.latent], t_len)
            k = self._split_heads(qkv[:, cfg.latent : 2 * cfg.latent], t_len)
            v = self._split_heads(qkv[:, 2 * cfg.latent :], t_len)
            q = nk.rope_apply(q, positions)
            k = nk.rope_apply(k, positions)
            attn = self._merge_heads(nk.scaled_dot_attention(q, k, v), t_len)
            attn = nk.dropout(attn, cfg.dropout, rng, training)
            x = x + nk.dense(attn, *blk["self_out"])

            normed = nk.layer_norm(x, *blk["ln_x"])
            q = self._split_heads(nk.dense(normed, *blk["q"]), t_len)
            kv = nk.dense(memory, *blk["kv"])
            k = self._split_heads(kv[:, : cfg.latent], c_len)
            v = self._split_heads(kv[:, cfg.latent :], c_len)
            # the conditioning stream is duration-aligned with the target, so
            # rotary positions let cross-attention localize boundary frames
            q = nk.rope_apply(q, positions)
            k = nk.rope_apply(k, np.arange(c_len))
            cross = self._merge_heads(nk.scaled_dot_attention(q, k, v), t_len)
            cross = nk.dropout(cross, cfg.dropout, rng, training)
            x = x + nk.dense(cross, *blk["cross_out"])

            normed = nk.layer_norm(x, *blk["ln2"])
            x = x + nk.dense(nk.gelu(nk.dense(normed, *blk["ff1"])), *blk["ff2"])

        x = nk.layer_norm(x, *self._ln_final)
        outputs = []
        for group in ("body", "face", "hand"):
            h = x
            layers = self._heads[group]
            for w, b in layers[:-1]:
                h = nk.gelu(nk.dense(h, w, b))
            outputs.append(nk.dense(h, *layers[-1]))
        out = nk.concat(outputs, axis=-1)
        if cfg.residual_conditioning:
            out = out + Tensor(np.asarray(cond, dtype=dtype))
        return out

    def predict_x0(self, x_t: np.ndarray, t: int, cond: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Inference-mode clean-motion prediction as a plain array."""
        return self.forward(x_t, t, cond, mask).data.astype(np.float64)
