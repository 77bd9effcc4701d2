from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from config import OptimizerConfig, ScheduleConfig
from exception import EpochOutOfRange, MissingGradient
from src.tensor import ParamStore


@dataclass
class OptimizerState:
    """AdamW moments per parameter name plus the step counter."""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, params: ParamStore, cfg: OptimizerConfig) -> "OptimizerState":
        state = cls(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay)
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def adamw_step(params: ParamStore, state: OptimizerState, lr: float) -> OptimizerState:
    """One AdamW update with bias correction; decay is applied to the weights, outside the adaptive step."""
    for name, tensor in params.items():
        if tensor.grad is None:
            raise MissingGradient(f"parameter {name!r} has no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name, tensor in params.items():
        g = tensor.grad
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            tensor.data *= 1.0 - lr * state.weight_decay
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return state


def cosine_lr(epoch: int, cfg: ScheduleConfig) -> float:
    """min + ½(base − min)(1 + cos(π·epoch/total))."""
    if not 0 <= epoch <= cfg.epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {cfg.epochs}]")
    if cfg.epochs == 0:
        return cfg.base_lr
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * epoch / cfg.epochs))


def clip_grad_norm(params: ParamStore, max_norm: float | None) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the norm before clipping."""
    total = math.sqrt(sum(float(np.sum(t.grad * t.grad)) for _, t in params.items() if t.grad is not None))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, tensor in params.items():
            if tensor.grad is not None:
                tensor.grad *= scale
    return total
