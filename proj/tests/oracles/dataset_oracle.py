"""Independent counts over a serialized dataset.

Usage: python3 dataset_oracle.py DATASET.json
Prints the number of games in which two candidates share a category, the
number of games, and the mean of 100/|candidates|.
"""
import json
import sys

doc = json.load(open(sys.argv[1]))
dup = 0
inv = 0.0
lowest = 0
for g in doc["games"]:
    cats = {o["id"]: o["category"] for o in g["objects"]}
    cc = [cats[c] for c in g["candidate_ids"]]
    if len(set(cc)) < len(cc):
        dup += 1
    inv += 100.0 / len(cc)
    if min(g["candidate_ids"]) == g["target_id"]:
        lowest += 1
n = len(doc["games"])
print(f"duplicated {dup} of {n}; mean 100/|c| = {inv / n:.4f}; lowest-id target {lowest}")
