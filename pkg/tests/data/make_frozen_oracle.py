"""Regenerate ``frozen_oracle.json``.

Each record stores two seeded random trees (integer edge lengths 1 to 4, at most
seven nodes) and the distance found by exhaustive enumeration of all edit
mappings.  The file is committed so that later changes to the enumerator
itself cannot silently move the expected values.

    python3 tests/data/make_frozen_oracle.py
"""
import json
from pathlib import Path

import numpy as np

from mtdist.datagen import random_tree
from mtdist.edit_model import brute_force_distance
from mtdist.merge_tree import tree_to_json

SEED = 20240601
COUNT = 60


def main():
    rng = np.random.default_rng(SEED)
    records = []
    for i in range(COUNT):
        t1 = random_tree(rng, max_nodes=7, integer_lengths=True)
        t2 = random_tree(rng, max_nodes=7, integer_lengths=True)
        res = brute_force_distance(t1, t2)
        records.append({"case": i, "t1": tree_to_json(t1), "t2": tree_to_json(t2),
                        "distance": res.value, "mappings": res.stats["mappings"]})
    out = Path(__file__).with_name("frozen_oracle.json")
    out.write_text(json.dumps({"seed": SEED, "cases": records}, indent=1) + "\n")
    print(f"wrote {len(records)} cases to {out}")


if __name__ == "__main__":
    main()
