"""The hardness reduction in action.

An exact-cover instance is turned into two trees whose norms differ by
exactly 3n - 2k.  The distance reaches that lower limit precisely when the
sets contain an exact cover.

    python3 demos/x3c_threshold.py
"""
import time

from mtdist.datagen import has_exact_cover, sample_x3c, x3c_trees
from mtdist.ip_encode import reencode_loop
from mtdist.solve import decide_threshold

for m, n, planted in [(3, 1, True), (3, 2, True), (6, 2, False)]:
    inst = sample_x3c(m, n, planted, seed=0)
    t1, t2 = x3c_trees(inst)
    print(f"m={m} sets={list(inst.sets)} cover={has_exact_cover(m, inst.sets)}")
    print(f"  trees of {t1.n_nodes} and {t2.n_nodes} nodes, 3n-2k = {inst.threshold:g}")
    start = time.perf_counter()
    if planted:
        res = reencode_loop(t1, t2)
        print(f"  distance {res.value:g} ({res.status})  [{time.perf_counter() - start:.1f} s]")
    else:
        # deciding the threshold is much cheaper than the exact distance here
        answer = decide_threshold(t1, t2, inst.threshold)
        print(f"  distance at most 3n-2k? {answer}  [{time.perf_counter() - start:.1f} s]")
