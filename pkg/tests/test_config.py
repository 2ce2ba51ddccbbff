from __future__ import annotations

import numpy as np
import pytest

from safe_oco.config import (
    PRESETS,
    ExperimentSpec,
    canonical_key,
    load_config,
    parse_config_text,
    parse_overrides,
    pick_baseline,
    resolve,
)
from safe_oco.errors import ConfigurationError, InvalidInputError, ParseError
from safe_oco.geometry import contains

BOX_TEXT = """
# box experiment
experiment.name = my_box
experiment.n_seeds = 2
run.T = 5000          # short horizon
constraint_matrix = [[1, 0], [-1, 0], [0, 1], [0, -1]]
constraint_offsets = [3, 3, 3, 3]
box_lower = [-3, -3]
box_upper = [3, 3]
scenario.kind = f2
run.known_set = TRUE
"""


def test_parse_file_text():
    v = parse_config_text(BOX_TEXT)
    assert v["experiment.name"] == "my_box" and v["run.T"] == 5000
    assert v["environment.constraint_matrix"] == [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert v["run.known_set"] is True and v["scenario.kind"] == "f2"


@pytest.mark.parametrize("text, line", [
    ("run.T = 100\nnot a pair\n", 2),
    ("run.T = 100\n\nrun.horizon = 5\n", 3),
    ("run.T = 1.5\n", 1),
    ("run.known_set = maybe\n", 1),
    ("box_lower = 3\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_config_text(text)
    assert exc.value.line == line


def test_precedence(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("run.T = 5000\nexperiment.n_seeds = 3\n")
    v = resolve("box_f2", load_config(path), parse_overrides(["run.T=7000"]))
    assert v["run.T"] == 7000  # override beats file
    assert v["experiment.n_seeds"] == 3  # file beats preset
    assert v["scenario.kind"] == "f2_quadratic"  # preset beats default
    assert v["run.delta"] == 1e-3  # default


def test_canonical_keys():
    assert canonical_key("box_upper") == "environment.box_upper"
    with pytest.raises(ConfigurationError):
        canonical_key("run.nope")
    with pytest.raises(ConfigurationError):
        parse_overrides(["run.T"])


def test_unknown_preset_and_kind():
    with pytest.raises(ConfigurationError):
        resolve("nope")
    with pytest.raises(InvalidInputError):
        resolve(None, None, {"scenario.kind": "f9"})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.cfg")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_builds_a_world(name, tmp_path):
    spec = ExperimentSpec.from_values(resolve(name, None, {"run.T": 300}), tmp_path)
    env, sc = spec.world(spec.master_seed)
    assert sc.T >= 300 and env.d == sc.d
    assert contains(env.polytope, env.ambient, env.baseline.x_s)


def test_random_baseline_lies_in_inner_box():
    spec = ExperimentSpec.from_values(resolve("box_f1"), ".")
    pts = np.array([pick_baseline(spec.polytope(), spec.ambient(), "random", 0.5, s) for s in range(200)])
    assert np.all(np.abs(pts) <= 1.5)
    assert pts.std(axis=0).min() > 0.5


def test_explicit_baseline_must_be_inside():
    spec = ExperimentSpec.from_values(resolve("box_f1", None, {"environment.baseline": [5, 0]}), ".")
    with pytest.raises(ConfigurationError):
        spec.baseline(0)


def test_seeds_follow_master_seed():
    spec = ExperimentSpec.from_values(resolve("box_f1", None, {"experiment.seed": 10}), ".")
    assert spec.seeds() == list(range(10, 16))
