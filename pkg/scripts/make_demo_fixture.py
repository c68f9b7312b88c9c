"""Regenerate the bundled demo fixture: a 48-record two-label review corpus.

The corpus is committed; rerun this only when the fixture format changes.
"""

from __future__ import annotations

import itertools
from pathlib import Path

from sdalign.corpus import Corpus, TextRecord, save_corpus

POSITIVE_OPENERS = [
    "a tender and surprising",
    "an unhurried, luminous",
    "a sharply written",
    "a warmly acted",
    "a quietly devastating",
    "an inventive little",
]
POSITIVE_SUBJECTS = ["drama", "comedy", "documentary", "thriller"]
POSITIVE_CLOSERS = [
    "that earns every minute of its runtime.",
    "with a score that lingers for days.",
    "anchored by two remarkable lead performances.",
    "that finds real feeling in small moments.",
]

NEGATIVE_OPENERS = [
    "a lazy and overlong",
    "an aggressively dull",
    "a clumsily edited",
    "a charmless, formulaic",
    "a shrill and exhausting",
    "an utterly forgettable",
]
NEGATIVE_SUBJECTS = ["sequel", "melodrama", "caper", "biopic"]
NEGATIVE_CLOSERS = [
    "that squanders a promising premise.",
    "with dialogue that lands like wet cardboard.",
    "sunk by a miscast and visibly bored ensemble.",
    "that mistakes volume for wit.",
]


def build_demo_corpus(per_label: int = 24) -> Corpus:
    records = []
    pos = itertools.product(POSITIVE_OPENERS, POSITIVE_SUBJECTS, POSITIVE_CLOSERS)
    neg = itertools.product(NEGATIVE_OPENERS, NEGATIVE_SUBJECTS, NEGATIVE_CLOSERS)
    for i, (opener, subject, closer) in enumerate(itertools.islice(pos, per_label)):
        records.append(
            TextRecord(id=f"pos{i:03d}", text=f"{opener} {subject} {closer}", label="positive")
        )
    for i, (opener, subject, closer) in enumerate(itertools.islice(neg, per_label)):
        records.append(
            TextRecord(id=f"neg{i:03d}", text=f"{opener} {subject} {closer}", label="negative")
        )
    return Corpus(records=tuple(records), label_set=("positive", "negative"))


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "fixtures" / "demo_corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus = build_demo_corpus()
    save_corpus(corpus, out)
    print(f"wrote {len(corpus)} records to {out}")


if __name__ == "__main__":
    main()
