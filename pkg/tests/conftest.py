"""Shared synthetic geometry and tiny-corpus helpers for the test suite."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from sdalign.corpus import Corpus, TextRecord

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"
DEMO_CONFIG = FIXTURES_DIR / "demo_config.yaml"
DEMO_CORPUS = FIXTURES_DIR / "demo_corpus.jsonl"

# Geometry shared by the coverage experiments: four well-separated blobs,
# 400 points total. The separation/std ratio is what makes the bandwidth
# sweep exhibit its rise-peak-decline shape, so keep these together.
CLUSTER_CENTERS = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]])
CLUSTER_STD = 1.0
POINTS_PER_CLUSTER = 100
COVERAGE_SIGMA = 0.3


def four_gaussian_mixture(seed: int) -> np.ndarray:
    """400 shuffled 2-D points drawn around the four cluster centers."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate(
        [c + CLUSTER_STD * rng.normal(size=(POINTS_PER_CLUSTER, 2)) for c in CLUSTER_CENTERS]
    )
    rng.shuffle(pts)
    return pts


def cluster_of(points: np.ndarray) -> np.ndarray:
    """Index of the nearest cluster center for each point."""
    d = np.linalg.norm(points[:, None, :] - CLUSTER_CENTERS[None, :, :], axis=2)
    return d.argmin(axis=1)


def biased_two_cluster(
    seed: int,
    m_ori: int = 2000,
    m_gen: int = 2000,
    gen_share: float = 0.8,
    dim: int = 4,
    sep: float = 6.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference set split 50/50 over two blobs; generated set skewed.

    Returns (e_ori, e_gen, gen_cluster) where gen_cluster[j] is 0 or 1 for
    the blob that generated row j of e_gen.
    """
    rng = np.random.default_rng(seed)
    # both centers nonzero and independent, else projected means cannot pin
    # the mass of a cluster sitting at the origin
    mu_a = np.zeros(dim)
    mu_a[1] = sep
    mu_b = np.zeros(dim)
    mu_b[0] = sep

    def blob(mu: np.ndarray, n: int) -> np.ndarray:
        return mu + rng.normal(size=(n, dim))

    half = m_ori // 2
    e_ori = np.concatenate([blob(mu_a, half), blob(mu_b, m_ori - half)])
    n_a = int(round(gen_share * m_gen))
    e_gen = np.concatenate([blob(mu_a, n_a), blob(mu_b, m_gen - n_a)])
    gen_cluster = np.array([0] * n_a + [1] * (m_gen - n_a))
    return e_ori, e_gen, gen_cluster


def make_corpus(
    texts: Sequence[str],
    labels: Sequence[str],
    label_set: Sequence[str] | None = None,
    prefix: str = "r",
    source: str = "real",
) -> Corpus:
    if label_set is None:
        label_set = tuple(dict.fromkeys(labels))
    records = tuple(
        TextRecord(id=f"{prefix}{i:03d}", text=t, label=lab, source=source)
        for i, (t, lab) in enumerate(zip(texts, labels))
    )
    return Corpus(records=records, label_set=tuple(label_set))


@pytest.fixture
def tiny_corpus() -> Corpus:
    texts = [
        "a quietly moving story with real warmth",
        "the pacing drags and the jokes fall flat",
        "sharp writing and a terrific lead performance",
        "a muddled plot that never earns its ending",
        "gorgeous to look at and surprisingly funny",
        "forgettable and far too long",
    ]
    labels = ["positive", "negative"] * 3
    return make_corpus(texts, labels, label_set=("positive", "negative"))
