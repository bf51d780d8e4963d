from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import EDU_INTERACTIONS, edu_registry, toy_records, synthetic_edu  # noqa: E402

from hetrec.io import write_interactions  # noqa: E402


@pytest.fixture
def registry():
    return edu_registry()


@pytest.fixture
def toy():
    return toy_records()


def write_schema(path: Path) -> Path:
    tags = sorted({d["source"] for d in EDU_INTERACTIONS} | {d["target"] for d in EDU_INTERACTIONS})
    path.write_text(json.dumps({"tags": tags, "interactions": EDU_INTERACTIONS}, indent=2))
    return path


@pytest.fixture
def toy_files(tmp_path):
    data = tmp_path / "toy.csv"
    write_interactions(toy_records(), data)
    return data, write_schema(tmp_path / "schema.json")


@pytest.fixture
def synth_files(tmp_path):
    """Synthetic educational-style log plus a small experiment config."""
    data = tmp_path / "interactions.csv"
    write_interactions(synthetic_edu(n_users=60, n_courses=15, seed=3), data)
    schema = write_schema(tmp_path / "schema.json")
    cfg = {
        "dataset": "interactions.csv",
        "schema": "schema.json",
        "target_tag": "course",
        "split": {"kind": "leave_one_out", "interaction": "follow_course"},
        "models": ["popular", "ubknn", "graph-uniform"],
        "cutoffs": [5, 10],
        "ga": {"max_generations": 3, "patience": 2, "seeds": [0, 1]},
    }
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps(cfg, indent=2))
    return data, schema, config


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
