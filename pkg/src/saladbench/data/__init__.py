"""Bundled synthetic corpora (see tools/make_toy_data.py for provenance)."""

from importlib import resources

from ..corpus import Dataset, LabelSet, load_dataset

SENTIMENT_LABELS = LabelSet(("negative", "positive"))
PAIR_LABELS = LabelSet(("no", "yes"), default_label=1)


def _path(name: str):
    return resources.files(__package__) / name


def load_toy_sentiment() -> Dataset:
    """200-example single-input sentiment corpus."""
    return load_dataset(str(_path("toy_sentiment.tsv")), "tsv",
                        SENTIMENT_LABELS, "single")


def load_toy_pairs() -> Dataset:
    """300-example pair-input paraphrase-style corpus (default label: yes)."""
    return load_dataset(str(_path("toy_pairs.tsv")), "tsv", PAIR_LABELS, "pair")
