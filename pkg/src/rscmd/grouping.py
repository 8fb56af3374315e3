"""RS-CMD group formation from the strength-weighted channel similarity matrix.

User ``i`` decoding user ``j``'s common message is decided greedily: the largest
remaining entry ``R_ext[i, j]`` wins, subject to the decoding-layer limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SimilarityMatrices:
    r: np.ndarray
    h_norm: np.ndarray
    r_ext: np.ndarray


@dataclass(frozen=True)
class GroupingResult:
    """Decode sets of an RS-CMD grouping.

    ``decodes[k]`` lists the common-message owners user ``k`` decodes, in SIC
    order (alien messages first, its own last). ``decoded_by[k]`` is the sorted
    tuple of users that decode ``k``'s common message.
    """

    decodes: tuple[tuple[int, ...], ...]
    decoded_by: tuple[tuple[int, ...], ...]
    decode_layers: int
    iterations: int = 0

    @property
    def n_users(self) -> int:
        return len(self.decodes)

    @classmethod
    def from_decodes(cls, decodes, decode_layers: int, iterations: int = 0) -> "GroupingResult":
        decodes = tuple(tuple(int(j) for j in z) for z in decodes)
        K = len(decodes)
        decoded_by = tuple(tuple(k for k in range(K) if j in decodes[k]) for j in range(K))
        res = cls(decodes, decoded_by, decode_layers, iterations)
        res.validate()
        return res

    @classmethod
    def singletons(cls, n_users: int, decode_layers: int = 1) -> "GroupingResult":
        return cls.from_decodes([(k,) for k in range(n_users)], decode_layers)

    def validate(self) -> None:
        K = len(self.decodes)
        for k, z in enumerate(self.decodes):
            if not z or z[-1] != k:
                raise ValueError(f"user {k} must decode its own common message last")
            if len(set(z)) != len(z) or len(z) > self.decode_layers:
                raise ValueError(f"bad decode list for user {k}: {z}")
            if any(not 0 <= j < K for j in z):
                raise ValueError(f"decode list of user {k} references unknown users")
        for j, m in enumerate(self.decoded_by):
            if set(m) != {k for k in range(K) if j in self.decodes[k]}:
                raise ValueError(f"decoded_by[{j}] is inconsistent with decodes")

    def sic_position(self, k: int, i: int) -> int:
        try:
            return self.decodes[k].index(i)
        except ValueError:
            raise ValueError(f"user {k} does not decode the common message of user {i}") from None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user", "sic_order", "decoded_by"])
            for k in range(self.n_users):
                writer.writerow([k, ";".join(map(str, self.decodes[k])), ";".join(map(str, self.decoded_by[k]))])


def _column_norms(channel: np.ndarray) -> np.ndarray:
    channel = np.asarray(channel)
    if channel.ndim != 2:
        raise ValueError("channel must be an N x K matrix")
    norms = np.linalg.norm(channel, axis=0)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise ValueError("every channel column must be finite and non-zero")
    return norms


def channel_similarity(channel) -> np.ndarray:
    """Normalized inner-product magnitude ``|h_k^H h_j| / (||h_k|| ||h_j||)``."""
    channel = np.asarray(channel, dtype=complex)
    norms = _column_norms(channel)
    r = np.abs(channel.conj().T @ channel) / np.outer(norms, norms)
    r = np.minimum(r, 1.0)
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def normalized_strengths(channel) -> np.ndarray:
    gains = _column_norms(np.asarray(channel, dtype=complex)) ** 2
    return gains / gains.max()


def extended_similarity(r, h_norm) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    h_norm = np.asarray(h_norm, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or h_norm.shape != (r.shape[0],):
        raise ValueError(f"shape mismatch: r {r.shape}, h_norm {h_norm.shape}")
    return h_norm[:, None] * r


def similarity_matrices(channel) -> SimilarityMatrices:
    r = channel_similarity(channel)
    h = normalized_strengths(channel)
    return SimilarityMatrices(r, h, extended_similarity(r, h))


def form_groups(r_ext, decode_layers: int) -> GroupingResult:
    """Greedy argmax pairing over the off-diagonal of ``r_ext``.

    Each visited entry is zeroed. A pair ``(i, j)`` is assigned (``j`` prepended
    to user ``i``'s SIC order) unless ``i`` already decodes ``decode_layers``
    messages, already decodes ``j``, or ``j`` already decodes ``i`` (a group has
    one decoding direction). Ties go to the smallest row, then column.
    """
    work = np.array(r_ext, dtype=float)
    if work.ndim != 2 or work.shape[0] != work.shape[1]:
        raise ValueError("r_ext must be square")
    if decode_layers < 1:
        raise ValueError("decode_layers must be >= 1")
    K = work.shape[0]
    np.fill_diagonal(work, 0.0)
    decodes = [[k] for k in range(K)]
    iterations = 0
    while True:
        if all(len(z) >= decode_layers for z in decodes):
            break
        flat = int(np.argmax(work))
        i, j = divmod(flat, K)
        if not work[i, j] > 0:
            break
        iterations += 1
        if len(decodes[i]) < decode_layers and j not in decodes[i] and i not in decodes[j]:
            decodes[i].insert(0, j)
        work[i, j] = 0.0
    return GroupingResult.from_decodes(decodes, decode_layers, iterations)


def build_grouping(channel, decode_layers: int) -> GroupingResult:
    return form_groups(similarity_matrices(channel).r_ext, decode_layers)
