#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Generate the synthetic training corpus from a small probabilistic grammar.

The text has enough local structure (agreement, recurring phrases, numbers,
punctuation) for a character n-gram model to learn well below the uniform
loss, without shipping third-party text.

    python3 tools/make_corpus.py --seed 1 --bytes 400000 > data/corpus.txt
"""
import argparse
import random
import sys

NOUNS = {
    "cat": "cats", "dog": "dogs", "river": "rivers", "engine": "engines",
    "garden": "gardens", "student": "students", "teacher": "teachers",
    "machine": "machines", "city": "cities", "child": "children",
    "sailor": "sailors", "kernel": "kernels", "matrix": "matrices",
    "signal": "signals", "farmer": "farmers", "bird": "birds",
    "library": "libraries", "tower": "towers", "storm": "storms",
}
VERBS = {  # singular, plural, past
    "see": ("sees", "see", "saw"), "build": ("builds", "build", "built"),
    "carry": ("carries", "carry", "carried"), "follow": ("follows", "follow", "followed"),
    "find": ("finds", "find", "found"), "watch": ("watches", "watch", "watched"),
    "move": ("moves", "move", "moved"), "count": ("counts", "count", "counted"),
    "open": ("opens", "open", "opened"), "measure": ("measures", "measure", "measured"),
}
ADJ = ["small", "quiet", "old", "bright", "heavy", "sparse", "dense", "green",
       "slow", "careful", "narrow", "warm", "strange", "patient"]
ADV = ["slowly", "quickly", "again", "carefully", "often", "never", "always"]
PREP = ["near", "under", "behind", "beside", "across", "inside"]
PLACES = ["the north gate", "the old mill", "the harbor", "the market",
          "the station", "the valley", "the workshop"]
CONJ = ["and", "but", "while", "because"]


def noun_phrase(rng):
    plural = rng.random() < 0.35
    noun = rng.choice(list(NOUNS))
    word = NOUNS[noun] if plural else noun
    det = rng.choice(["the", "the", "a", "every", "one"]) if not plural else rng.choice(
        ["the", "some", "many", "two", "three"])
    if det == "a" and word[0] in "aeiou":
        det = "an"
    parts = [det]
    if rng.random() < 0.5:
        adj = rng.choice(ADJ)
        if det == "a" and adj[0] in "aeiou":
            parts[0] = "an"
        elif det == "an" and adj[0] not in "aeiou":
            parts[0] = "a"
        parts.append(adj)
    parts.append(word)
    return " ".join(parts), plural


def clause(rng):
    subj, plural = noun_phrase(rng)
    verb = rng.choice(list(VERBS))
    tense = rng.random()
    if tense < 0.4:
        v = VERBS[verb][2]
    else:
        v = VERBS[verb][1] if plural else VERBS[verb][0]
    obj, _ = noun_phrase(rng)
    out = f"{subj} {v} {obj}"
    if rng.random() < 0.4:
        out += f" {rng.choice(PREP)} {rng.choice(PLACES)}"
    if rng.random() < 0.3:
        out += f" {rng.choice(ADV)}"
    return out


def sentence(rng):
    r = rng.random()
    if r < 0.1:
        n = rng.randint(2, 99)
        noun = rng.choice(list(NOUNS))
        s = f"there were {n} {NOUNS[noun]} {rng.choice(PREP)} {rng.choice(PLACES)}"
    elif r < 0.35:
        s = f"{clause(rng)} {rng.choice(CONJ)} {clause(rng)}"
    else:
        s = clause(rng)
    s = s[0].upper() + s[1:]
    return s + rng.choice([".", ".", ".", "!", "?"] if r > 0.9 else ["."])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--bytes", type=int, default=400_000)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out, size = [], 0
    while size < args.bytes:
        para = " ".join(sentence(rng) for _ in range(rng.randint(3, 7))) + "\n"
        out.append(para)
        size += len(para)
    sys.stdout.write("".join(out)[: args.bytes])


if __name__ == "__main__":
    main()
