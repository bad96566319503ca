from __future__ import annotations

import pytest

from tracescope import toytrain


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """One small finalized toy-trainer run, shared read-only across tests."""
    out = tmp_path_factory.mktemp("toy") / "toy_run"
    toytrain.train_and_record(steps=60, seed=11, out_path=out, growth="1.5")
    return out


@pytest.fixture(scope="session")
def toy_data_root(toy_run):
    return toy_run.parent
