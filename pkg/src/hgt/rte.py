"""Relative temporal encoding.

Base(ΔT, j) = sin(ΔT / 10000^(j/d)) for even j and cos(ΔT / 10000^(j/d)) for
odd j; the encoding is T-Linear(Base). Base rows are cached per distinct ΔT
until :meth:`RelativeTemporalEncoding.reset_cache` (once per mini-batch).
"""

from __future__ import annotations

import numpy as np

from src.tensor import ParamStore, Tensor, ops


def rte_base(delta_t, dim: int) -> np.ndarray:
    """Sinusoid basis rows for one ΔT (shape [d]) or an array of them (shape [k×d])."""
    deltas = np.asarray(delta_t, dtype=np.float64)
    j = np.arange(dim, dtype=np.float64)
    angles = deltas[..., None] / np.power(10000.0, j / dim)
    return np.where(j % 2 == 0, np.sin(angles), np.cos(angles))


class RelativeTemporalEncoding:
    def __init__(self, params: ParamStore, hidden_dim: int, prefix: str):
        self.hidden_dim = hidden_dim
        self.weight = params.create(f"{prefix}.weight", (hidden_dim, hidden_dim))
        self.bias = params.create(f"{prefix}.bias", (hidden_dim,), init="zeros")
        self._cache: dict[int, np.ndarray] = {}

    def reset_cache(self) -> None:
        self._cache.clear()

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def _base_rows(self, deltas: np.ndarray) -> np.ndarray:
        rows = []
        for dt in deltas.tolist():
            row = self._cache.get(dt)
            if row is None:
                row = rte_base(dt, self.hidden_dim)
                self._cache[dt] = row
            rows.append(row)
        return np.asarray(rows, dtype=self.weight.dtype).reshape(len(rows), self.hidden_dim)

    def encode(self, delta_t: int) -> Tensor:
        """RTE(ΔT) as a [d] tensor."""
        table, _ = self.table(np.array([delta_t], dtype=np.int64))
        return ops.reshape(table, (self.hidden_dim,))

    def table(self, deltas: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Encodings of the distinct ΔT values plus, per input, the row of its encoding."""
        unique, inverse = np.unique(np.asarray(deltas, dtype=np.int64), return_inverse=True)
        base = Tensor(self._base_rows(unique))
        return ops.linear(base, self.weight, self.bias), inverse.reshape(-1)


def apply_rte(h_src: Tensor, t_target: int, t_source: int, rte: RelativeTemporalEncoding | None) -> Tensor:
    """Ĥ[s] = H[s] + RTE(T_t − T_s); identity when RTE is disabled (``rte`` is None)."""
    if rte is None:
        return h_src
    return ops.add(h_src, rte.encode(int(t_target) - int(t_source)))
