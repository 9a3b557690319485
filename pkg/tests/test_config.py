import copy
import json

import pytest

from riskmpc.config import build, load, load_shipped, parse, shipped_config_path, validate
from riskmpc.errors import ConfigurationError


@pytest.mark.parametrize("name", ["case_study.json", "case_study_full.json", "sensitivity.json"])
def test_shipped_configs_validate(name):
    doc = json.loads(shipped_config_path(name).read_text())
    assert validate(doc) == []
    load_shipped(name)


def test_case_study_values(shipped):
    spec = shipped.spec
    assert spec.pt_min.tolist() == [0.4] and spec.pt_max.tolist() == [1.0]
    assert spec.x_max.tolist() == [7.0] and spec.Ts == 0.5
    assert shipped.controller.horizon == 4 and shipped.controller.steps == 48
    assert shipped.alphas == (0.0, 0.5, 1.0)


def mutated(shipped, path, value):
    doc = copy.deepcopy(shipped.document)
    node = doc
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return doc


def test_zero_sharing_gain_rejected(shipped):
    problems = validate(mutated(shipped, ["microgrid", "conventional", "chi"], [0.0]))
    assert any("power_sharing_gain_positive" in p for p in problems)
    with pytest.raises(ConfigurationError, match="power_sharing_gain_positive"):
        build(mutated(shipped, ["microgrid", "conventional", "chi"], [0.0]))


def test_soft_band_above_capacity_rejected(shipped):
    problems = validate(mutated(shipped, ["microgrid", "storage", "x_soft_max"], [7.5]))
    assert any("soft_band_within_capacity" in p for p in problems)


def test_branching_must_match_horizon(shipped):
    problems = validate(mutated(shipped, ["tree", "branching"], [5, 2]))
    assert any("branching_matches_horizon" in p for p in problems)


def test_schema_errors_name_the_field(shipped):
    doc = copy.deepcopy(shipped.document)
    del doc["controller"]["horizon"]
    problems = validate(doc)
    assert problems and problems[0].startswith("schema: controller")


def test_parse_error_location():
    with pytest.raises(ConfigurationError, match="line 2 column"):
        parse('{\n  "a": ,\n}')


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load(tmp_path / "absent.json")


def test_disconnected_network_rejected(shipped):
    lines = shipped.document["microgrid"]["network"]["lines"][:1]
    problems = validate(mutated(shipped, ["microgrid", "network", "lines"], lines))
    assert any("network_connected" in p for p in problems)
