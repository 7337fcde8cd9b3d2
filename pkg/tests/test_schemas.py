"""
Guards the CSV column layouts against the checked-in golden copy. A column
change must bump the schema version and update tests/golden/schemas.json.
"""

import json
import os

import pytest

from terrasense.constants import CSV_SCHEMAS, STATE_NAMES
from terrasense.runs import schema_header

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "schemas.json")


@pytest.fixture(scope="module")
def golden():
    with open(GOLDEN, encoding="utf-8") as f:
        return json.load(f)


def test_same_schema_names(golden):
    assert sorted(golden) == sorted(CSV_SCHEMAS)


@pytest.mark.parametrize("name", sorted(CSV_SCHEMAS))
def test_columns_and_version_match(golden, name):
    version, cols = CSV_SCHEMAS[name]
    assert golden[name]["version"] == version
    assert tuple(golden[name]["columns"]) == cols


@pytest.mark.parametrize("name", sorted(CSV_SCHEMAS))
def test_columns_are_unique(name):
    cols = CSV_SCHEMAS[name][1]
    assert len(set(cols)) == len(cols)


def test_state_columns_follow_state_order():
    assert CSV_SCHEMAS["plant"][1][1:7] == STATE_NAMES
    assert CSV_SCHEMAS["estimation"][1][1:9] == tuple(
        f"zhat_{n}" for n in STATE_NAMES + ("n_f", "n_r"))


def test_header_line():
    assert schema_header("estimation") == "# schema: estimation v1"
