"""Compare how much gradient each consumer of a tensor sends back.

The toy model's prediction node feeds both losses.  The per-successor
average absolute gradient shows whether one consumer dominates training;
a large max/min ratio means the shared tensor develops mostly for one of
them.
"""

import tempfile
from pathlib import Path

from tracescope import Mode, QueryService, SelectorTuple, View
from tracescope.toytrain import train_and_record

workdir = Path(tempfile.mkdtemp(prefix="tracescope_demo_"))
train_and_record(steps=500, seed=21, out_path=workdir / "toy_run")

service = QueryService(workdir)
steps = service.list_steps("toy_run", "trial_0", category="default")

print("gradient balance at prediction's consumers over training:")
for step in steps[2::4]:
    result = service.gradient_balance("toy_run", "trial_0", step, "prediction")
    parts = ", ".join(f"{row['node']}={row['abs_mean']:.3e}"
                      for row in result["successors"])
    print(f"  step {step:>4}: {parts}  ratio {result['max_min_ratio']:.2f}")

# The same statistics exist for every loss separately.
step = steps[-1]
for loss in ("main", "aux", "combined"):
    record = service.get_record("toy_run", SelectorTuple(
        trial_id="trial_0", step=step, node_id="w1", variant_key="value",
        mode=Mode.gradient(loss), view=View.aggregate()))
    print(f"w1 grad({loss:<8}) abs_mean {record['stats']['abs_mean']:.3e} "
          f"std {record['stats']['std']:.3e}")
