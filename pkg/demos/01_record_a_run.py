"""Record a complete training run with the built-in toy model.

The toy task predicts running partial sums of a random sequence.  Training
runs for a few hundred steps; the recording scheduler keeps early steps
densely and later steps sparsely, per category.
"""

import tempfile
from pathlib import Path

from tracescope import open_run, validate_run
from tracescope.toytrain import train_and_record

workdir = Path(tempfile.mkdtemp(prefix="tracescope_demo_"))
run_dir = train_and_record(steps=400, seed=7, out_path=workdir / "toy_run",
                           growth="1.5")
print(f"run written to {run_dir}")

# The directory is self-describing: a manifest, the dependency graph, binary
# step chunks, notes, scalars, and the offset index written at finalization.
for path in sorted(run_dir.iterdir()):
    size = path.stat().st_size if path.is_file() else len(list(path.iterdir()))
    unit = "bytes" if path.is_file() else "files"
    print(f"  {path.name:<15} {size} {unit}")

# Every run should validate cleanly before you trust it.
diagnostics = validate_run(run_dir)
print(f"validate: {len(diagnostics)} diagnostics")

reader = open_run(run_dir)
print(f"recorded steps: {[entry.step for entry in reader.steps]}")
print("note the density: early steps are recorded consecutively, later ones "
      "at geometrically growing gaps, separately per category")
