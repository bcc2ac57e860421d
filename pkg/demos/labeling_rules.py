#!/usr/bin/env python3
# How the four labeling rules fire, and where they go wrong.

from logsynth.labeler import Event, LabelRuleSet, label_sequence

rules = LabelRuleSet()


def show(title, *lines):
    events = [Event(i, lvl, msg) for i, (lvl, msg) in enumerate(lines)]
    label, evidence = label_sequence(events, rules)
    print(f"{title:<28} -> {label:<9} {evidence}")


# %% one example per rule kind
show("severity", ("INFO", "Starting"), ("FATAL", "Disk gone"))
show("exception name", ("WARN", "Caught IOException while reading blk_1"))
show("keyword", ("INFO", "connection refused by peer"))
show("status code", ("INFO", "Served request, status=503"))

# %% near misses stay normal
show("status 200", ("INFO", "status=200"))
show("class name, not exception", ("INFO", "Registered IOExceptionHandler"))
show("block id that looks like 404", ("INFO", "Deleting blk_404"))

# %% known blind spots: the rules see words, not meaning
show("vague identifier", ("INFO", "Node 7 state X2"))
show("state transition", ("INFO", "Lease moved from ACTIVE to EXPIRED"))
show("recovery action", ("INFO", "Restarting node due to timeout"))
