"""How the geometric recording schedule thins recordings over a run.

Each category advances its own integer-recurrence schedule, so rare batch
types stay densely recorded no matter how busy the common ones are.
"""

from tracescope import ScheduleRegistry, register_category, should_record

print("recorded occurrence indices by growth factor (first 200 occurrences):")
for growth in ("1.1", "1.5", "2", "3"):
    state = register_category("probe", growth)
    recorded = []
    for i in range(200):
        hit, state = should_record(state)
        if hit:
            recorded.append(i)
    print(f"  g={growth:<4} -> {recorded}")

# Two interleaved categories, one 50x rarer than the other.  The rare one
# still records its first occurrences densely.
registry = ScheduleRegistry("2")
registry.register("common")
registry.register("rare")

common_hits, rare_hits = [], []
rare_seen = 0
for step in range(2000):
    if step % 50 == 25:
        if registry.observe("rare"):
            rare_hits.append(step)
        rare_seen += 1
    else:
        if registry.observe("common"):
            common_hits.append(step)

print(f"\ncommon category recorded at steps: {common_hits}")
print(f"rare category recorded at steps:   {rare_hits}")
print(f"(the rare category appeared {rare_seen} times and recorded "
      f"{len(rare_hits)} of them; its early density is unaffected by the "
      f"common category's traffic)")
