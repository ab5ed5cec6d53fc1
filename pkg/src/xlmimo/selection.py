"""Strongest-UE subarray selection.

Each SA serves, for every pilot in use, the pilot holder with the largest
large-scale gain at that SA. Serving structures are kept as index sets;
the block-diagonal masks are never materialised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xlmimo.channel import ChannelStatistics
from xlmimo.estimation import PilotAssignment


@dataclass(frozen=True)
class ServingMap:
    """``serving[k]``: sorted SA indices serving UE k (may be empty);
    ``partners[k]``: UEs sharing at least one serving SA with k."""

    serving: tuple[np.ndarray, ...]
    partners: tuple[np.ndarray, ...]
    L: int

    @property
    def K(self) -> int:
        return len(self.serving)

    def served(self) -> np.ndarray:
        return np.array([s.size > 0 for s in self.serving])

    def n_serving(self) -> np.ndarray:
        return np.array([s.size for s in self.serving])

    def membership(self) -> np.ndarray:
        """Boolean (K, L) table: ``[k, l]`` is True iff SA l serves UE k."""
        table = np.zeros((self.K, self.L), dtype=bool)
        for k, s in enumerate(self.serving):
            table[k, s] = True
        return table

    def antenna_indices(self, k: int, N: int) -> np.ndarray:
        """Indices of UE k's serving antennas in the stacked L·N vector."""
        s = self.serving[k]
        return (s[:, None] * N + np.arange(N)[None, :]).ravel()


def partner_sets(serving: list[np.ndarray] | tuple[np.ndarray, ...], L: int) -> tuple[np.ndarray, ...]:
    """``S_k = {i : M_i ∩ M_k ≠ ∅}``."""
    K = len(serving)
    table = np.zeros((K, L), dtype=bool)
    for k, s in enumerate(serving):
        table[k, s] = True
    overlap = (table.astype(np.int64) @ table.T.astype(np.int64)) > 0
    return tuple(np.flatnonzero(overlap[k]) for k in range(K))


def strongest_ue_selection(stats: ChannelStatistics, assignment: PilotAssignment) -> ServingMap:
    """Per SA and used pilot, serve the pilot holder with the largest ``beta``.

    Ties go to the lowest UE index.
    """
    beta = stats.beta
    K, L = beta.shape
    winners = [[] for _ in range(K)]
    for l in range(L):
        for members in assignment.groups:
            if members.size == 0:
                continue
            k = int(members[np.argmax(beta[members, l])])
            winners[k].append(l)
    serving = tuple(np.array(w, dtype=np.int64) for w in winners)
    return ServingMap(serving=serving, partners=partner_sets(serving, L), L=L)
