"""Distribution alignment: reweight synthetic samples so their projected mean
matches the real data, then resample with replacement.

The objective is the mean, over a family of orthonormalized random directions,
of the squared gap between the real-data projected mean and the weighted
synthetic projected mean. It is quadratic in the weights and solved by
projected gradient descent with a nonnegativity constraint (negative weights
cannot drive with-replacement resampling).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, EmbeddingMatrix, TextRecord

DEFAULT_PROJECTION_COUNT = 100
_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class ProjectionSet:
    """m unit-norm direction vectors in R^d, orthonormal within blocks of size d."""

    vectors: np.ndarray
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.1
    max_iters: int = 2000
    tol: float = 1e-8
    nonneg_projection: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class AlignmentWeights:
    """Learned per-synthetic-sample weights plus the optimization trace."""

    weights: np.ndarray
    loss_trace: tuple[float, ...]
    projection_seed: int
    optimizer: OptimizerConfig

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)


def gram_schmidt_projections(dim: int, count: int, seed: int) -> ProjectionSet:
    """Seeded random unit directions, orthonormalized in blocks of size ``dim``.

    At most ``dim`` mutually orthogonal vectors exist, so once a block fills
    up (or a candidate's residual collapses and is resampled) a fresh block
    starts; orthogonality is guaranteed within blocks only.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    rows = np.empty((count, dim), dtype=np.float64)
    block_start = 0
    i = 0
    while i < count:
        if i - block_start == dim:
            block_start = i
        candidate = rng.standard_normal(dim)
        block = rows[block_start:i]
        if len(block):
            candidate = candidate - block.T @ (block @ candidate)
            candidate = candidate - block.T @ (block @ candidate)  # second pass for stability
        norm = np.linalg.norm(candidate)
        if norm < _ORTHO_TOL:
            continue  # degenerate draw, resample
        rows[i] = candidate / norm
        i += 1
    return ProjectionSet(vectors=rows, seed=seed)


def _as_array(e: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    arr = e.data if isinstance(e, EmbeddingMatrix) else np.asarray(e)
    return np.asarray(arr, dtype=np.float64)


def _check_inputs(e_ori, e_gen, omega, proj: ProjectionSet):
    a = _as_array(e_ori)
    b = _as_array(e_gen)
    w = np.asarray(omega, dtype=np.float64)
    if a.shape[1] != b.shape[1] or a.shape[1] != proj.dim:
        raise ValueError(
            f"dimension mismatch: ori d={a.shape[1]}, gen d={b.shape[1]}, projections d={proj.dim}"
        )
    if w.shape != (b.shape[0],):
        raise ValueError(f"omega must have length {b.shape[0]}, got shape {w.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite input")
    return a, b, w


def _residuals(a: np.ndarray, b: np.ndarray, w: np.ndarray, proj: ProjectionSet) -> tuple[np.ndarray, np.ndarray]:
    # residual per direction: weighted generated mean minus original mean
    p_gen = proj.vectors @ b.T  # (m, M)
    r = p_gen @ w / b.shape[0] - proj.vectors @ a.mean(axis=0)
    return r, p_gen


def mmd_loss(e_ori, e_gen, omega, proj: ProjectionSet) -> float:
    """Mean squared projected-mean gap; 0 iff the weighted means coincide on every direction."""
    a, b, w = _check_inputs(e_ori, e_gen, omega, proj)
    r, _ = _residuals(a, b, w, proj)
    return float(np.mean(r * r))


def mmd_gradient(e_ori, e_gen, omega, proj: ProjectionSet) -> np.ndarray:
    """Analytic gradient of :func:`mmd_loss` with respect to omega.

    With residual r_t = (1/M) sum_j w_j (theta_t . e_gen_j) - mean_i (theta_t . e_ori_i),
    dL/dw_j = (2 / (m M)) sum_t r_t (theta_t . e_gen_j).
    """
    a, b, w = _check_inputs(e_ori, e_gen, omega, proj)
    r, p_gen = _residuals(a, b, w, proj)
    m = proj.count
    return (2.0 / (m * b.shape[0])) * (p_gen.T @ r)


def learn_weights(e_ori, e_gen, proj: ProjectionSet, opts: OptimizerConfig | None = None) -> AlignmentWeights:
    """Minimize the projected-mean gap over nonnegative weights by gradient descent.

    Starts from all-ones (so trace[0] is the unaligned gap), halves the step
    for any iteration where the loss would increase (up to 20 halvings), and
    stops on relative loss change below ``tol`` or on the iteration budget.
    """
    opts = opts or OptimizerConfig()
    a, b, w = _check_inputs(e_ori, e_gen, np.ones(_as_array(e_gen).shape[0]), proj)
    loss = mmd_loss(a, b, w, proj)
    if not np.isfinite(loss):
        raise ValueError("non-finite loss at initialization")
    trace = [loss]
    for _ in range(opts.max_iters):
        grad = mmd_gradient(a, b, w, proj)
        lr = opts.learning_rate
        accepted = None
        for _halving in range(21):
            candidate = w - lr * grad
            if opts.nonneg_projection:
                candidate = np.maximum(candidate, 0.0)
            cand_loss = mmd_loss(a, b, candidate, proj)
            if not np.isfinite(cand_loss):
                raise ValueError("non-finite loss during descent; learning_rate far too large")
            if cand_loss <= loss:
                accepted = (candidate, cand_loss)
                break
            lr *= 0.5
        if accepted is None:
            break  # no non-increasing step exists at this scale
        w, new_loss = accepted
        trace.append(new_loss)
        rel_change = abs(loss - new_loss) / max(loss, np.finfo(float).tiny)
        loss = new_loss
        if rel_change < opts.tol:
            break
    return AlignmentWeights(weights=w, loss_trace=tuple(trace), projection_seed=proj.seed, optimizer=opts)


def resample(
    gen: Corpus, weights: AlignmentWeights | np.ndarray, target_size: int, seed: int
) -> Corpus:
    """Draw ``target_size`` records i.i.d. with replacement, P(j) = w_j / sum(w).

    Repeat draws of a record get fresh ids with meta.parent_id pointing at
    the source record; the first occurrence keeps its original id.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    w = weights.weights if isinstance(weights, AlignmentWeights) else weights
    w = np.asarray(w, dtype=np.float64)
    if len(w) != len(gen):
        raise ValueError(f"weights length {len(w)} does not match corpus size {len(gen)}")
    total = w.sum()
    if not total > 0:
        raise ValueError("all-zero weights: nothing to resample")
    rng = np.random.default_rng(seed)
    drawn = rng.choice(len(gen), size=target_size, replace=True, p=w / total)
    records: list[TextRecord] = []
    seen: dict[int, int] = {}
    for pos, j in enumerate(drawn):
        j = int(j)
        src = gen[j]
        copies = seen.get(j, 0)
        seen[j] = copies + 1
        if copies == 0:
            records.append(src)
        else:
            meta = dict(src.meta) if src.meta else {}
            meta["parent_id"] = src.id
            records.append(
                TextRecord(
                    id=f"{src.id}-r{pos}",
                    text=src.text,
                    label=src.label,
                    source=src.source,
                    meta=meta,
                )
            )
    return Corpus(records=tuple(records), label_set=gen.label_set)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_weights(weights: AlignmentWeights, gen: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "omega"])
        for rec, w in zip(gen.records, weights.weights):
            writer.writerow([rec.id, repr(float(w))])


def load_weights(path: str | Path, gen: Corpus) -> np.ndarray:
    by_id: dict[str, float] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            by_id[row["record_id"]] = float(row["omega"])
    try:
        return np.array([by_id[rec.id] for rec in gen.records], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"{path}: no weight for record {exc.args[0]!r}") from exc


def save_loss_trace(weights: AlignmentWeights, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss"])
        for i, loss in enumerate(weights.loss_trace):
            writer.writerow([i, repr(float(loss))])
