"""Exploration-aware demonstration sampling with a Gaussian-process uncertainty tracker.

Every real sample starts at variance 1; selecting a batch pins its members to
variance 0 and conditions the posterior, so nearby samples are suppressed and
the next anchor lands in a region the sampler has not explored yet. The kernel
bandwidth controls how far that suppression reaches.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .corpus import Corpus, EmbeddingMatrix

DEFAULT_K = 5
DEFAULT_SIGMA = 0.5
DEFAULT_MAX_ROUNDS = 200

# Small enough that posterior variances stay within 1e-10 of the noise-free
# normal equations; the +I noise term already keeps the system nonsingular.
_JITTER = 1e-12
_PIVOT_FLOOR = 1e-10


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel settings.

    ``exponent_form`` selects whether the Euclidean distance in the exponent
    is left as-is ("unsquared", the default) or squared ("squared", the
    conventional Gaussian RBF). Both yield values in (0, 1].
    """

    tau: float
    exponent_form: Literal["unsquared", "squared"] = "unsquared"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.exponent_form not in ("unsquared", "squared"):
            raise ValueError(f"unknown exponent_form {self.exponent_form!r}")


@dataclass(frozen=True)
class DemonstrationBatch:
    """Anchor plus its nearest unselected neighbors, anchor first."""

    anchor: int
    members: tuple[int, ...]
    round: int = 0

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        object.__setattr__(self, "members", members)
        if len(set(members)) != len(members):
            raise ValueError("batch members must be distinct")
        if not members or members[0] != self.anchor:
            raise ValueError("anchor must be members[0]")
        if self.round < 0:
            raise ValueError("round must be >= 0")


def _pairwise_kernel(a: np.ndarray, b: np.ndarray, config: KernelConfig) -> np.ndarray:
    if config.exponent_form == "squared":
        d = cdist(a, b, "sqeuclidean")
    else:
        d = cdist(a, b, "euclidean")
    return np.exp(-d / (2.0 * config.tau))


def rbf_kernel(e_i: np.ndarray, e_j: np.ndarray, config: KernelConfig) -> float:
    """Kernel value in (0, 1]; equals 1 iff the two vectors coincide."""
    e_i = np.asarray(e_i, dtype=np.float64)
    e_j = np.asarray(e_j, dtype=np.float64)
    if e_i.shape != e_j.shape:
        raise ValueError(f"dimension mismatch: {e_i.shape} vs {e_j.shape}")
    dist = float(np.linalg.norm(e_i - e_j))
    if config.exponent_form == "squared":
        dist = dist * dist
    return float(np.exp(-dist / (2.0 * config.tau)))


class TrackerState:
    """Posterior-variance tracker over a fixed embedding matrix.

    ``variance[i]`` is the current uncertainty of sample i (exactly 0 once
    selected); ``selected`` is the ordered list of selected row indices. The
    Cholesky factor of K(S,S) + (1 + jitter) I is cached and extended
    incrementally as batches are appended.
    """

    def __init__(self, embeddings: EmbeddingMatrix | np.ndarray, kernel: KernelConfig):
        points = embeddings.data if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("empty corpus: tracker needs at least one embedding row")
        self.points = points
        self.kernel = kernel
        self.variance = np.ones(points.shape[0], dtype=np.float64)
        self.selected: list[int] = []
        self.history: list[DemonstrationBatch] = []
        self._chol: np.ndarray | None = None  # lower-triangular factor, lazily built

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def unselected(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.selected] = False
        return np.flatnonzero(mask)

    def _extend_cholesky(self, new_rows: Sequence[int]) -> None:
        new_pts = self.points[list(new_rows)]
        # diagonal of K(S,S) + I: unit prior variance plus observation noise
        diag_boost = 2.0 + _JITTER
        c = _pairwise_kernel(new_pts, new_pts, self.kernel)
        c[np.diag_indices_from(c)] = diag_boost
        if self._chol is None or not self.selected:
            self._chol = cholesky(c, lower=True)
            return
        old_pts = self.points[self.selected]
        b = _pairwise_kernel(old_pts, new_pts, self.kernel)
        l21 = solve_triangular(self._chol, b, lower=True).T
        schur = c - l21 @ l21.T
        if np.min(np.diag(schur)) < _PIVOT_FLOOR:
            full = np.concatenate([self.selected, list(new_rows)])
            pts = self.points[full]
            k = _pairwise_kernel(pts, pts, self.kernel)
            k[np.diag_indices_from(k)] = diag_boost
            self._chol = cholesky(k, lower=True)
            return
        l22 = cholesky(schur, lower=True)
        top = np.hstack([self._chol, np.zeros((self._chol.shape[0], len(new_rows)))])
        bottom = np.hstack([l21, l22])
        self._chol = np.vstack([top, bottom])


def init_tracker(embeddings: EmbeddingMatrix | np.ndarray, config: KernelConfig) -> TrackerState:
    """Fresh tracker: all variances 1, nothing selected, no kernel materialized."""
    return TrackerState(embeddings, config)


def select_demonstrations(state: TrackerState, k: int) -> DemonstrationBatch:
    """Pick the highest-variance unselected sample plus its k-1 nearest unselected neighbors.

    Ties in variance and in neighbor distance both break toward the lowest
    index. The state is not modified.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pool = state.unselected()
    if len(pool) < k:
        raise ValueError(f"need {k} unselected samples, only {len(pool)} remain")
    anchor = int(pool[np.argmax(state.variance[pool])])
    others = pool[pool != anchor]
    if k == 1:
        members = (anchor,)
    else:
        dists = np.linalg.norm(state.points[others] - state.points[anchor], axis=1)
        order = np.argsort(dists, kind="stable")  # stable keeps lowest index on ties
        members = (anchor, *(int(i) for i in others[order[: k - 1]]))
    return DemonstrationBatch(anchor=anchor, members=members, round=len(state.history))


def update_uncertainty(state: TrackerState, batch: DemonstrationBatch) -> TrackerState:
    """Condition the tracker on a batch: members drop to variance 0, the rest shrink.

    The unselected variance is kappa(u,u) - k_uS (K_SS + I)^-1 k_Su with S the
    full selected set; the posterior mean is identically 0 and never stored.
    """
    already = set(state.selected).intersection(batch.members)
    if already:
        raise ValueError(f"batch members already selected: {sorted(already)}")
    try:
        state._extend_cholesky(batch.members)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"kernel factorization failed: {exc}") from exc
    state.selected.extend(batch.members)
    state.history.append(batch)
    state.variance[list(batch.members)] = 0.0
    pool = state.unselected()
    if len(pool):
        k_su = _pairwise_kernel(state.points[state.selected], state.points[pool], state.kernel)
        v = solve_triangular(state._chol, k_su, lower=True)
        post = 1.0 - np.einsum("ij,ij->j", v, v)
        state.variance[pool] = np.clip(post, 0.0, None)
    return state


def run_sampling(
    state: TrackerState,
    k: int = DEFAULT_K,
    sigma: float = DEFAULT_SIGMA,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    on_round: Callable[[TrackerState, DemonstrationBatch], None] | None = None,
) -> list[DemonstrationBatch]:
    """Alternate select/update until max unselected variance <= sigma.

    Also stops when fewer than k unselected samples remain or the round
    budget is exhausted. The caller's state reflects the final tracker;
    ``on_round`` observes it after each update.
    """
    if not 0 < sigma < 1:
        raise ValueError(f"sigma must be in (0, 1), got {sigma}")
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
    batches: list[DemonstrationBatch] = []
    while len(batches) < max_rounds:
        pool = state.unselected()
        if len(pool) < k:
            break
        if state.variance[pool].max() <= sigma:
            break
        batch = select_demonstrations(state, k)
        update_uncertainty(state, batch)
        batches.append(batch)
        if on_round is not None:
            on_round(state, batch)
    return batches


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_batches(batches: Sequence[DemonstrationBatch], corpus: Corpus, path: str | Path) -> None:
    """Write batches as JSON lines {round, anchor_id, member_ids}."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for batch in batches:
            obj = {
                "round": batch.round,
                "anchor_id": corpus[batch.anchor].id,
                "member_ids": [corpus[m].id for m in batch.members],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_batches(path: str | Path, corpus: Corpus) -> list[DemonstrationBatch]:
    batches = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                members = tuple(corpus.index_of(i) for i in obj["member_ids"])
                batches.append(
                    DemonstrationBatch(
                        anchor=corpus.index_of(obj["anchor_id"]),
                        members=members,
                        round=int(obj["round"]),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: malformed batch line {lineno}") from exc
    return batches


def write_variance_snapshot(state: TrackerState, corpus: Corpus, path: str | Path, round_no: int | None = None) -> None:
    """Append-style CSV export (index, id, variance), optionally tagged with a round."""
    path = Path(path)
    new_file = not path.exists()
    with path.open("a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["round", "index", "id", "variance"] if round_no is not None else ["index", "id", "variance"])
        for i in range(state.n):
            row = [i, corpus[i].id, repr(float(state.variance[i]))]
            if round_no is not None:
                row.insert(0, round_no)
            writer.writerow(row)
