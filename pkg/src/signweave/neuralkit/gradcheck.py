"""Central finite-difference verification of analytic gradients (fp64 mode)."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .nn import ParameterSet
from .tensor import Tensor


def fd_gradient(f: Callable[[], Tensor], leaf: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar f with respect to one leaf tensor."""
    base = leaf.data.copy()
    grad = np.zeros_like(base, dtype=np.float64)
    flat = base.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        leaf.data = flat.reshape(base.shape)
        hi = f().item()
        flat[i] = orig - h
        leaf.data = flat.reshape(base.shape)
        lo = f().item()
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    leaf.data = base
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(num / den)


def check_gradients(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> dict[str, float]:
    """Full coordinate-wise check of every leaf; returns per-leaf relative errors."""
    loss = f()
    for leaf in leaves:
        leaf.grad = None
    loss.backward()
    errors = {}
    for idx, leaf in enumerate(leaves):
        analytic = np.zeros_like(leaf.data, dtype=np.float64) if leaf.grad is None else leaf.grad.astype(np.float64)
        numeric = fd_gradient(f, leaf, h)
        err = relative_error(analytic, numeric)
        errors[leaf.name or f"leaf{idx}"] = err
        if err > tol:
            raise AssertionError(f"gradient check failed for {leaf.name or idx}: rel err {err:.3e} > {tol}")
    return errors


def check_directional(
    f: Callable[[], Tensor],
    params: ParameterSet,
    rng: np.random.Generator,
    directions: int = 3,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> list[float]:
    """Directional central-difference checks over a full parameter set.

    Compares dot(grad, v) against (f(theta + h v) - f(theta - h v)) / 2h for
    random unit directions v; covers every parameter in one scalar probe.
    """
    loss = f()
    params.zero_grad()
    loss.backward()
    grads = {name: (params[name].grad.astype(np.float64).copy()
                    if params[name].grad is not None else np.zeros_like(params[name].data, dtype=np.float64))
             for name in params.names()}
    errors = []
    for _ in range(directions):
        vs = {name: rng.normal(size=params[name].data.shape) for name in params.names()}
        norm = np.sqrt(sum(np.sum(v**2) for v in vs.values()))
        vs = {name: v / norm for name, v in vs.items()}
        analytic = sum(np.sum(grads[name] * vs[name]) for name in params.names())
        saved = {name: params[name].data.copy() for name in params.names()}
        for name in params.names():
            params[name].data = saved[name] + h * vs[name]
        hi = f().item()
        for name in params.names():
            params[name].data = saved[name] - h * vs[name]
        lo = f().item()
        for name in params.names():
            params[name].data = saved[name]
        numeric = (hi - lo) / (2.0 * h)
        denom = max(abs(analytic), abs(numeric), 1e-12)
        err = abs(analytic - numeric) / denom
        errors.append(err)
        if err > tol:
            raise AssertionError(f"directional gradient check failed: rel err {err:.3e} > {tol}")
    return errors
