import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles`


SMOKE_SPEC = {
    "master_seed": 20240117,
    "profile": "blip2",
    "suites": [
        {"kind": "quality", "trials_per_cell": 2},
        {"kind": "size", "trials_per_cell": 2},
        {"kind": "distractor", "n_numbers": 2, "reps": 1, "counts": [0, 2, 5]},
        {"kind": "location", "n_numbers": 1},
        {"kind": "boundary_cut", "n_numbers": 1, "step": 16},
    ],
}


@pytest.fixture
def smoke_spec_path(tmp_path):
    path = tmp_path / "smoke_spec.json"
    path.write_text(json.dumps(SMOKE_SPEC))
    return path
