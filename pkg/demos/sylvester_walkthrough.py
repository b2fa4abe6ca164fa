"""The coupled Sylvester equation: three PMEs, commuting updates and 64 invariants."""

from importlib import resources

from pmederive import check_derivation, generate_invariants, load_spec, random_instance
from pmederive.report import invariant_text, pme_text

spec = load_spec(resources.files("pmederive") / "corpus" / "coupled_sylvester.clk")
d = generate_invariants(spec)

for p in d.pmes:
    print(f"PME {p.index} ({p.pme.ruleset.traversal}): {len(p.tasks)} tasks, "
          f"{len(p.candidates)} candidates, {len(p.invariants)} invariants")
    print(pme_text(p.pme))

p = d.pmes[2]
print("commute groups:", p.graph.commute_groups())
for a, b, kind in p.graph.edges:
    print(f"  {a} -> {b}  {kind}")

largest = max(p.invariants, key=lambda inv: len(inv.subgraph))
print("\nlargest invariant, tasks", set(largest.subgraph))
print(invariant_text(largest, p.pme.shape))

inst = random_instance(spec, {"m": 3, "n": 4}, seed=1)
print("exact check, m=3 n=4, every split pair:", check_derivation(d, inst).summary())
