"""Walk through every stage of the LU derivation and check it on an exact instance."""

from importlib import resources

from pmederive import check_derivation, generate_invariants, load_spec, random_instance
from pmederive.report import invariant_text, pme_text
from pmederive.tasks import to_dot

spec = load_spec(resources.files("pmederive") / "corpus" / "lu.clk")
d = generate_invariants(spec)
p = d.pmes[0]

print("rule set:", p.pme.ruleset.describe())
print()
print(pme_text(p.pme))
for a in p.pme.assumptions:
    print("assume", a)

print("\ntasks:")
for t in p.tasks:
    print(f"  {t.id}: {t.text()}")
print("levels:", p.graph.levels)
print(to_dot(p.graph, "LU"))

print(f"{len(p.candidates)} candidates, {len(p.invariants)} feasible")
for inv in p.invariants:
    print(f"tasks {set(inv.subgraph)}   while {inv.guard}")
    print(invariant_text(inv, p.pme.shape))

report = check_derivation(d, random_instance(spec, 5, seed=0))
print("exact check on a 5x5 instance:", report.summary())
