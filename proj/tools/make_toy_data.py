#!/usr/bin/env python3
"""Regenerates the synthetic corpora under data/ (deterministic, seed 1234).

The sentences come from a small grammar; STS gold scores are derived from how
many content words a paraphrase keeps, and the transfer task labels a sentence
by the topic of its subject.
"""
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")

ANIMALS = ["cat", "dog", "horse", "rabbit", "fox", "owl", "tiger", "sparrow", "wolf", "goat",
           "parrot", "mouse", "bear", "deer", "duck", "lion", "otter", "eagle", "frog", "camel"]
VEHICLES = ["car", "truck", "train", "bicycle", "tram", "bus", "ferry", "scooter", "van", "plane",
            "tractor", "taxi", "rocket", "boat", "jeep", "wagon", "yacht", "subway", "glider", "motorbike"]
ADJ = ["small", "large", "quiet", "noisy", "old", "young", "red", "blue", "fast", "slow", "happy",
       "tired", "bright", "dark", "heavy", "light", "strange", "famous", "lonely", "busy"]
VERBS = ["crossed", "watched", "followed", "passed", "reached", "avoided", "circled", "entered",
         "left", "approached", "found", "chased", "ignored", "visited", "guarded", "climbed"]
PLACES = ["the bridge", "the river", "the market", "the station", "the forest", "the hill",
          "the village", "the harbor", "the road", "the field", "the square", "the tunnel",
          "the garden", "the lake", "the valley", "the school"]
ADV = ["slowly", "quickly", "carefully", "suddenly", "again", "today", "at night", "in the rain",
       "before dawn", "after lunch", "without noise", "for hours"]
SYN = {"small": "little", "large": "big", "quiet": "silent", "noisy": "loud", "fast": "quick",
       "happy": "cheerful", "tired": "weary", "crossed": "went over", "watched": "observed",
       "followed": "trailed", "reached": "arrived at", "found": "discovered", "quickly": "rapidly",
       "slowly": "gradually", "suddenly": "abruptly", "famous": "well known", "old": "aged"}


def sentence(rng, nouns):
    return " ".join([
        "The", rng.choice(ADJ), rng.choice(nouns), rng.choice(VERBS), rng.choice(PLACES),
        rng.choice(ADV)]) + "."


def parts(rng, nouns):
    return [rng.choice(ADJ), rng.choice(nouns), rng.choice(VERBS), rng.choice(PLACES),
            rng.choice(ADV)]


def join(p):
    return "The " + " ".join(p) + "."


def perturb(rng, p, nouns):
    """Returns (paraphrase, gold) where gold falls with each replaced slot."""
    q = list(p)
    n_change = rng.randint(0, 5)
    slots = rng.sample(range(5), n_change)
    pools = [ADJ, nouns, VERBS, PLACES, ADV]
    for s in slots:
        choices = [w for w in pools[s] if w != q[s]]
        q[s] = rng.choice(choices)
    # synonyms keep meaning
    n_syn = 0
    for i, w in enumerate(q):
        if i not in slots and w in SYN and rng.random() < 0.5:
            q[i] = SYN[w]
            n_syn += 1
    gold = 5.0 * (5 - n_change) / 5.0 - 0.2 * n_syn
    return join(q), round(max(0.0, min(5.0, gold)), 2)


def main():
    rng = random.Random(1234)
    os.makedirs(os.path.join(ROOT, "sts"), exist_ok=True)
    os.makedirs(os.path.join(ROOT, "transfer"), exist_ok=True)

    with open(os.path.join(ROOT, "corpus.txt"), "w") as f:
        for _ in range(6000):
            f.write(sentence(rng, ANIMALS + VEHICLES) + "\n")
        for w in sorted(set(SYN.values())):
            f.write(f"It was {w} and {w} again.\n")
        f.write('This sentence : "x" means in one word: "\n' * 50)
        f.write('After thinking step by step , this sentence : "x" means in one word: "\n' * 50)

    for name, n in (("toy-sts-a", 150), ("toy-sts-b", 150)):
        with open(os.path.join(ROOT, "sts", name + ".tsv"), "w") as f:
            for _ in range(n):
                nouns = ANIMALS if rng.random() < 0.5 else VEHICLES
                p = parts(rng, nouns)
                para, gold = perturb(rng, p, nouns)
                f.write(f"{gold}\t{join(p)}\t{para}\n")

    with open(os.path.join(ROOT, "sentences.txt"), "w") as f:
        for _ in range(120):
            f.write(sentence(rng, ANIMALS + VEHICLES) + "\n")
    with open(os.path.join(ROOT, "sentences20.txt"), "w") as f:
        for _ in range(20):
            f.write(sentence(rng, ANIMALS + VEHICLES) + "\n")

    for split, n in (("train", 240), ("test", 120)):
        with open(os.path.join(ROOT, "transfer", f"topic.{split}.tsv"), "w") as f:
            for i in range(n):
                label = i % 2
                f.write(f"{label}\t{sentence(rng, VEHICLES if label else ANIMALS)}\n")

    # Head of each STS set, for quick layer sweeps.
    os.makedirs(os.path.join(ROOT, "sts-small"), exist_ok=True)
    for name in ("toy-sts-a", "toy-sts-b"):
        with open(os.path.join(ROOT, "sts", name + ".tsv")) as src:
            head = src.readlines()[:40]
        with open(os.path.join(ROOT, "sts-small", name + ".tsv"), "w") as f:
            f.writelines(head)


if __name__ == "__main__":
    main()
