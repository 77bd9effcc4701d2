from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Tape, Tensor
from .params import ParamStore


def _value(out) -> float:
    if isinstance(out, Tensor):
        return float(out.data.reshape(-1)[0])
    return float(out)


def grad_check(
    f: Callable[[ParamStore], Tensor | float],
    params: ParamStore,
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximised
    over the checked entries. ``max_entries`` limits the check to a random
    subset of entries per parameter. Run in float64.
    """
    params.zero_grad()
    with Tape() as tape:
        out = f(params)
        if isinstance(out, Tensor):
            tape.backward(out)
    analytic = {name: t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for name, t in params.items()}

    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad = analytic[name].reshape(-1)
        for i in indices:
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = _value(f(params))
            flat[i] = saved - eps
            f_minus = _value(f(params))
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(grad[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
