"""Lexical-overlap destructive transformations: Sort, Reverse, Shuffle, CopySort.

These preserve the token multiset and only change order; a terminal
punctuation mark (. ! ?) stays pinned at the end of the output.
"""

from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass
from typing import Optional

from .corpus import Example, TextInput, Token, TokenSeq, detokenize, tokenize
from .errors import DegenerateInputError, UnsupportedTransformError

log = logging.getLogger(__name__)

TERMINAL_PUNCT = (".", "!", "?")

LEXICAL_KINDS = ("sort", "reverse", "shuffle", "copysort")
GRADIENT_KINDS = ("drop", "repeat", "replace", "copyone")
ALL_KINDS = LEXICAL_KINDS + GRADIENT_KINDS + ("pbsmt",)
PAIR_ONLY_KINDS = ("copysort", "copyone")


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    target_side: str = "b"
    seed: int = 0
    r: float = 0.5
    max_shuffle_attempts: int = 100

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise UnsupportedTransformError(f"unknown transform kind {self.kind!r}")
        if self.target_side not in ("a", "b"):
            raise UnsupportedTransformError(f"bad target_side {self.target_side!r}")
        if not 0.0 < self.r <= 1.0:
            raise UnsupportedTransformError(f"r must be in (0,1], got {self.r}")

    def tag(self) -> str:
        """Provenance string written to transformed dataset files."""
        return f"{self.kind}:{self.seed}:{self.r}"


@dataclass(frozen=True)
class TransformedExample:
    example: Example
    source_id: str
    transform: TransformSpec
    valid_label_erased: bool = True


def _split_terminal(seq: TokenSeq) -> tuple[list[str], Optional[str]]:
    surfaces = list(seq.surfaces)
    if surfaces and surfaces[-1] in TERMINAL_PUNCT:
        return surfaces[:-1], surfaces[-1]
    return surfaces, None


def _rebuild(content: list[str], terminal: Optional[str]) -> TokenSeq:
    if terminal is not None:
        content = content + [terminal]
    return TokenSeq.from_surfaces(content)


def sort_tokens(seq: TokenSeq) -> TokenSeq:
    """Lexicographic stable sort; terminal punctuation stays last."""
    if len(seq) == 0:
        raise DegenerateInputError("cannot sort an empty sequence")
    content, terminal = _split_terminal(seq)
    content.sort(key=str.casefold)
    return _rebuild(content, terminal)


def reverse_tokens(seq: TokenSeq) -> TokenSeq:
    if len(seq) == 0:
        raise DegenerateInputError("cannot reverse an empty sequence")
    content, terminal = _split_terminal(seq)
    content.reverse()
    return _rebuild(content, terminal)


def _bigrams(surfaces) -> set[tuple[str, str]]:
    return set(zip(surfaces, surfaces[1:]))


def shuffle_with_report(seq: TokenSeq, seed: int,
                        max_attempts: int = 100) -> tuple[TokenSeq, int, bool]:
    """Shuffle until no ordered bigram of the input survives.

    Returns (shuffled, shared_bigram_count, exhausted). When no bigram-free
    permutation is found within max_attempts, the best attempt seen is
    returned with exhausted=True.
    """
    content, terminal = _split_terminal(seq)
    if len(content) < 2:
        raise DegenerateInputError("shuffle needs at least 2 content tokens")
    rng = random.Random(seed)
    original = _rebuild(list(content), terminal).surfaces
    forbidden = _bigrams(original)
    best: Optional[list[str]] = None
    best_shared = len(forbidden) + 1
    for _ in range(max_attempts):
        candidate = list(content)
        rng.shuffle(candidate)
        out = _rebuild(candidate, terminal)
        shared = len(_bigrams(out.surfaces) & forbidden)
        if shared == 0:
            return out, 0, False
        if shared < best_shared:
            best, best_shared = candidate, shared
    log.warning("shuffle exhausted %d attempts; best attempt shares %d bigrams",
                max_attempts, best_shared)
    return _rebuild(best, terminal), best_shared, True


def shuffle_tokens(seq: TokenSeq, seed: int, max_attempts: int = 100) -> TokenSeq:
    out, _, _ = shuffle_with_report(seq, seed, max_attempts)
    return out


def copy_sort(ex: Example, spec: Optional[TransformSpec] = None) -> TransformedExample:
    """Replace text_b with the sorted tokens of text_a."""
    if not ex.input.is_pair:
        raise UnsupportedTransformError("copysort requires a pair-input task")
    spec = spec or TransformSpec(kind="copysort")
    sorted_a = sort_tokens(tokenize(ex.input.text_a))
    new_input = TextInput(ex.input.text_a, detokenize(sorted_a))
    return TransformedExample(
        example=Example(ex.id, new_input, ex.gold_label),
        source_id=ex.id,
        transform=spec,
    )


def apply_lexical(ex: Example, spec: TransformSpec) -> TransformedExample:
    """Apply one of the four lexical kinds to an Example per its spec."""
    if spec.kind == "copysort":
        return copy_sort(ex, spec)
    side = spec.target_side if ex.input.is_pair else "a"
    text = ex.input.text_a if side == "a" else ex.input.text_b
    seq = tokenize(text)
    if spec.kind == "sort":
        out = sort_tokens(seq)
    elif spec.kind == "reverse":
        out = reverse_tokens(seq)
    elif spec.kind == "shuffle":
        out = shuffle_tokens(seq, spec.seed, spec.max_shuffle_attempts)
    else:
        raise UnsupportedTransformError(f"{spec.kind} is not a lexical transform")
    new_text = detokenize(out)
    if side == "a":
        new_input = TextInput(new_text, ex.input.text_b)
    else:
        new_input = TextInput(ex.input.text_a, new_text)
    return TransformedExample(
        example=Example(ex.id, new_input, ex.gold_label),
        source_id=ex.id,
        transform=spec,
    )


def bigram_free_permutation_exists(seq: TokenSeq) -> bool:
    """Exhaustive check (intended for short sequences) that some permutation
    of the content tokens shares no ordered bigram with the input."""
    content, terminal = _split_terminal(seq)
    original = seq.surfaces
    forbidden = _bigrams(original)
    for perm in itertools.permutations(content):
        out = _rebuild(list(perm), terminal)
        if not (_bigrams(out.surfaces) & forbidden):
            return True
    return False
