"""Walk the selector space: trials, steps, nodes, modes, and views.

Everything the GUI shows comes from these queries; this script drives them
directly from Python.
"""

import tempfile
from pathlib import Path

from tracescope import Mode, QueryService, SelectorTuple, View
from tracescope.toytrain import train_and_record

workdir = Path(tempfile.mkdtemp(prefix="tracescope_demo_"))
train_and_record(steps=300, seed=3, out_path=workdir / "toy_run")

service = QueryService(workdir)
run_id = service.list_runs()[0]["run_id"]

# Selector options are enumerated from the data, never hard-coded.
selectors = service.selectors(run_id)
print("trials:    ", selectors["trials"])
print("categories:", selectors["categories"])
print("losses:    ", selectors["losses"])
print("metadata:  ", selectors["metadata_keys"])

steps = service.list_steps(run_id, "trial_0")
print("recorded steps:", steps)

# Filter the step list by a condition, e.g. only long-sequence batches.
long_steps = service.list_steps(run_id, "trial_0", metadata=("seq_len", 8))
print("steps with seq_len == 8:", long_steps)

# One coordinate, three views of the same record.
step = steps[-1]
base = dict(trial_id="trial_0", step=step, node_id="hidden", variant_key="t0")

aggregate = service.get_record(run_id, SelectorTuple(
    mode=Mode.forward(), view=View.aggregate(), **base))
print(f"\nhidden/t0 forward at step {step}:")
print(f"  batch x features = {aggregate['shape']['batch']} x "
      f"{aggregate['shape']['features']}")
print(f"  mean {aggregate['stats']['mean']:+.4f}  std {aggregate['stats']['std']:.4f}")

per_neuron = service.get_record(run_id, SelectorTuple(
    mode=Mode.forward(), view=View.per_neuron(), **base))
spread = [s["std"] for s in per_neuron["stats"]]
print(f"  per-neuron stds range {min(spread):.4f} .. {max(spread):.4f}")

sample = service.get_record(run_id, SelectorTuple(
    mode=Mode.forward(), view=View.sample(0), **base))
print(f"  sample 0 values: {[round(v, 3) for v in sample['values'][:4]]} ...")

# Switching to gradient mode resolves per loss.  The aux loss never touches
# the final prediction position, so that coordinate reports "not recorded".
grad = service.get_record(run_id, SelectorTuple(
    mode=Mode.gradient("main"), view=View.aggregate(), trial_id="trial_0",
    step=step, node_id="w1", variant_key="value"))
print(f"\nw1 gradient (main): abs_mean {grad['stats']['abs_mean']:.6f}")

from tracescope import NotRecordedError  # noqa: E402

try:
    service.get_record(run_id, SelectorTuple(
        mode=Mode.gradient("aux"), view=View.aggregate(), trial_id="trial_0",
        step=step, node_id="target", variant_key="value"))
except NotRecordedError as exc:
    print(f"target has no aux gradient, as expected: {exc}")
