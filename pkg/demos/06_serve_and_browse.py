"""Serve a recorded run over HTTP and hit the JSON API.

The same server hosts the browser UI when frontend/dist is built; here we
talk to the API directly.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from tracescope import make_server
from tracescope.toytrain import train_and_record

workdir = Path(tempfile.mkdtemp(prefix="tracescope_demo_"))
train_and_record(steps=200, seed=5, out_path=workdir / "toy_run")

server = make_server(workdir, port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
host, port = server.server_address[:2]
base = f"http://{host}:{port}"
print(f"serving at {base} (Ctrl-C to stop when run interactively)")


def get(path):
    with urllib.request.urlopen(base + path) as response:
        return json.loads(response.read())


print("\nGET /api/runs")
print(" ", get("/api/runs"))

steps = get("/api/runs/toy_run/steps?trial=trial_0")
print(f"\nGET /api/runs/toy_run/steps?trial=trial_0 -> {steps}")

record = get(f"/api/runs/toy_run/record?trial=trial_0&step={steps[0]}"
             f"&node=prediction&variant=partial_sum_t0")
print(f"\nprediction/partial_sum_t0 at step {steps[0]}:")
print(f"  {json.dumps(record['stats'], indent=2)}")

graph = get("/api/runs/toy_run/graph")
print(f"\ngraph: {len(graph['nodes'])} nodes, {len(graph['edges'])} edges, "
      f"{1 + max(graph['layers'].values())} layers")

server.shutdown()
server.server_close()
