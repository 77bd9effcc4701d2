from __future__ import annotations

import numpy as np

from src.tensor import ParamStore, Tensor, ops


class ClassificationHead:
    """Softmax output layer d → C."""

    def __init__(self, params: ParamStore, hidden_dim: int, n_classes: int, prefix: str = "head.classify"):
        self.n_classes = n_classes
        self.weight = params.create(f"{prefix}.weight", (hidden_dim, n_classes))
        self.bias = params.create(f"{prefix}.bias", (n_classes,), init="zeros")

    def logits(self, H: Tensor) -> Tensor:
        return ops.linear(H, self.weight, self.bias)


def classify_loss(H: Tensor, labels, head: ClassificationHead) -> tuple[Tensor, Tensor]:
    """Mean cross-entropy of the head's logits against integer labels; returns (loss, logits)."""
    logits = head.logits(H)
    return ops.cross_entropy(logits, np.asarray(labels, dtype=np.int64)), logits


class NTNHead:
    """Neural tensor network: u · tanh(p W[1..k] aᵀ + V[p; a] + b) + c, squashed by a sigmoid."""

    def __init__(self, params: ParamStore, hidden_dim: int, slices: int = 4, prefix: str = "head.ntn"):
        d = hidden_dim
        self.slices = params.create(f"{prefix}.slices", (slices, d, d))
        self.pair = params.create(f"{prefix}.pair.weight", (2 * d, slices))
        self.pair_bias = params.create(f"{prefix}.pair.bias", (slices,), init="zeros")
        self.out = params.create(f"{prefix}.out.weight", (slices, 1))
        self.out_bias = params.create(f"{prefix}.out.bias", (1,), init="zeros")

    def logits(self, p: Tensor, a: Tensor) -> Tensor:
        """Raw NTN scores for row-aligned pairs; shape [n]."""
        bilinear = ops.bilinear_slices(p, self.slices, a)
        pair = ops.linear(ops.concat([p, a], axis=1), self.pair, self.pair_bias)
        hidden = ops.tanh(ops.add(bilinear, pair))
        out = ops.linear(hidden, self.out, self.out_bias)
        return ops.reshape(out, (out.shape[0],))


def ntn_score(p: Tensor, a: Tensor, head: NTNHead) -> float | np.ndarray:
    """Link probability in (0, 1) for one pair ([d] inputs) or row-aligned pairs ([n×d])."""
    single = p.ndim == 1
    if single:
        p = ops.reshape(p, (1, p.shape[0]))
        a = ops.reshape(a, (1, a.shape[0]))
    probs = ops.sigmoid(head.logits(p, a)).data
    return float(probs[0]) if single else probs
