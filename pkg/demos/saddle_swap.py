"""Two nearly identical trees whose saddles merge in a different order.

Matching the saddles to each other forces feature C to be deleted and
re-inserted.  The edit distance instead removes the short edge between the two
saddles on one side and inserts it on the other, which is much cheaper.

    python3 demos/saddle_swap.py
"""
from mtdist.datagen import make_saddle_swap_pair
from mtdist.edit_model import mapping_cost, realize_mapping
from mtdist.ip_encode import reencode_loop

t1, t2 = make_saddle_swap_pair((1, 1, 4, 4, 2))
names = ["root", "upper saddle", "inner saddle", "A", "B", "C"]

res = reencode_loop(t1, t2)
print(f"distance {res.value:g} ({res.status})")
cost = mapping_cost(t1, t2, res.witness)
for a, b in res.witness:
    print(f"  T1 {names[a]:>12}  <->  T2 {names[b]}")
print("unmatched in T1:", [names[v] for v, s in enumerate(cost.status1) if s != "mapped"],
      "->", [s for s in cost.status1 if s != "mapped"])

keep_saddles = [(0, 0), (1, 1), (2, 2), (3, 4), (4, 5), (5, 3)]
print(f"saddle-preserving correspondence costs {mapping_cost(t1, t2, keep_saddles).total:g}")

real = realize_mapping(t1, t2, res.witness)
print(f"explicit edit sequence: {real.n_ops} operations, cost {real.cost:g}, reaches T2: {real.matches_target}")
