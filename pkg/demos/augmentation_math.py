#!/usr/bin/env python3
# Ratio arithmetic for synthetic augmentation and the train/test leakage guard.

from fractions import Fraction

from logsynth.dataset import DatasetSplit, plan_augmentation, split_guard, target_count
from logsynth.labeler import ANOMALOUS, NORMAL, Event, Session


def session(sid, label, provenance):
    return Session(sid, label, provenance, "", [Event(1, "INFO", sid)], [])


# %% N_syn = round-half-up(R * N_real), done in exact rational arithmetic
for ratio, n_real in [("0.01", 1000), ("0.001", 46_000), ("0.25", 6), ("1/3", 10)]:
    print(f"R={ratio:<6} n_real={n_real:<6} -> {target_count(Fraction(ratio), n_real)} synthetic sessions")

# %% picks are split evenly between normal and anomalous, seeded
pool = [session(f"n{i}", NORMAL, "synthetic") for i in range(8)] + \
       [session(f"a{i}", ANOMALOUS, "synthetic") for i in range(3)]
plan = plan_augmentation(90, pool, Fraction(1, 10), seed=7)
print()
print(plan.render())

# %% synthetic data must never reach the test split
train = [session(f"r{i}", NORMAL, "real") for i in range(5)]
test = [session(f"t{i}", NORMAL, "real") for i in range(3)]
print(split_guard(DatasetSplit(train, test)).render())
print(split_guard(DatasetSplit(train, test + [pool[0], train[0]])).render())
