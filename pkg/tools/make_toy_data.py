#!/usr/bin/env python3
"""Regenerates the bundled synthetic corpora under src/saladbench/data/.

Two tiny datasets sized for fast, deterministic tests:
  toy_sentiment.tsv  200 single-input rows, labels negative/positive
  toy_pairs.tsv      300 pair-input rows, labels no/yes (paraphrase-style)

Sentences mix class-signal words with neutral fillers so that a
bag-of-embeddings model can separate the classes, and destructive
transformations leave a learnable distributional footprint.
"""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "saladbench" / "data"

POS = ["wonderful", "delightful", "superb", "charming", "vivid", "brilliant",
       "tender", "radiant", "witty", "graceful"]
NEG = ["dreadful", "tedious", "clumsy", "bland", "grim", "dismal",
       "shrill", "hollow", "lifeless", "soggy"]
FILLERS = ["the", "a", "this", "that", "movie", "film", "story", "plot",
           "scene", "acting", "cast", "script", "pacing", "ending", "feels",
           "seems", "rather", "quite", "overall", "somewhat", "truly",
           "fairly", "really", "very"]

PREMISE = ["report", "committee", "states", "budget", "meeting", "council",
           "project", "schedule", "review", "board", "member", "team",
           "office", "program", "network", "student", "group", "plan",
           "agency", "policy"]
B_FILLERS = ["statement", "claim", "idea", "point", "view", "summary",
             "notion", "account", "reading", "version", "phrasing",
             "wording", "message", "remark", "assertion"]
YES_WORDS = ["indeed", "agrees", "matches", "confirms", "similar",
             "equivalent", "consistent", "restates"]
NO_WORDS = ["differs", "contradicts", "opposite", "unrelated",
            "denies", "conflicting", "distinct", "disputes"]


def sentence(rng, signal, fillers, n_fill, n_sig):
    words = rng.sample(fillers, n_fill) + rng.sample(signal, n_sig)
    rng.shuffle(words)
    return " ".join(words) + " ."


def headed_sentence(rng, signal, fillers, n_head, n_sig):
    """Filler-only opening followed by a signal-heavy close.

    The fixed head/tail structure keeps the signal-word fraction of clean
    sentences in a narrow band, so destructive edits that concentrate or
    synthesize signal words leave a footprint a bag-of-embeddings model can
    pick up.
    """
    head = rng.sample(fillers, n_head)
    tail = rng.sample(signal, n_sig)
    rng.shuffle(tail)
    return " ".join(head + tail) + " ."


def make_sentiment(rng, n=200):
    rows = []
    for i in range(n):
        label = "positive" if i % 2 == 0 else "negative"
        signal = POS if label == "positive" else NEG
        text = headed_sentence(rng, signal, FILLERS,
                               rng.randint(4, 5), 3)
        rows.append((f"s{i:03d}", text, "", label))
    return rows


def make_pairs(rng, n=300):
    rows = []
    for i in range(n):
        label = "yes" if i % 2 == 0 else "no"
        text_a = " ".join(rng.sample(PREMISE, rng.randint(5, 8))) + " ."
        signal = YES_WORDS if label == "yes" else NO_WORDS
        text_b = sentence(rng, signal, B_FILLERS,
                          rng.randint(3, 5), rng.randint(2, 3))
        rows.append((f"p{i:03d}", text_a, text_b, label))
    return rows


def write(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("id\ttext_a\ttext_b\tlabel\n")
        for row in rows:
            f.write("\t".join(row) + "\n")
    print(f"wrote {len(rows)} rows to {path}")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write(OUT / "toy_sentiment.tsv", make_sentiment(random.Random(42)))
    write(OUT / "toy_pairs.tsv", make_pairs(random.Random(43)))
