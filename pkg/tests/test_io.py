from __future__ import annotations

import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge.core import SpatialGrid, TimeGrid
from pulseforge.errors import InputError, PulseforgeError
from pulseforge.io import (
    ChannelTable,
    export_table,
    format_float,
    import_table,
    load_schema,
    write_json,
)


def _wide(seed: int = 0, n_steps: int = 20) -> ChannelTable:
    rng = np.random.default_rng(seed)
    g = TimeGrid(0.0, 1.3, n_steps)
    return ChannelTable("field-pulse", g, ("Bx", "By"), rng.normal(size=(n_steps + 1, 2)), meta={"B0": 1.0})


def _long(seed: int = 0) -> ChannelTable:
    rng = np.random.default_rng(seed)
    g = TimeGrid(0.0, 0.7, 4)
    sp = SpatialGrid(-1.0, 1.0, 7)
    return ChannelTable.from_space_time("scalar-potential", g, sp, {"V": rng.normal(size=(5, 7))}, {"mass": 1.0})


def _same(a: ChannelTable, b: ChannelTable) -> None:
    assert a.channels == b.channels
    assert a.layout == b.layout
    assert np.array_equal(a.grid.times, b.grid.times)
    assert np.array_equal(a.samples, b.samples)
    if a.x is not None:
        assert np.array_equal(a.x, b.x)


@pytest.mark.parametrize("fmt", ["csv", "json"])
@pytest.mark.parametrize("make", [_wide, _long])
def test_round_trip_is_bit_exact(tmp_path, fmt, make):
    table = make()
    back = import_table(export_table(table, tmp_path / f"t.{fmt}"), kind=table.kind)
    _same(table, back)
    if fmt == "json":
        assert back.kind == table.kind
        assert back.meta == table.meta


@settings(max_examples=100, deadline=None)
@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_float_rendering_round_trips(x):
    assert float(format_float(x)) == x


def test_spin_pulse_first_row(tmp_path):
    g = TimeGrid(0.0, 12.0, 100)
    samples = np.zeros((101, 2))
    samples[:, 0] = 1.0
    path = export_table(ChannelTable("field-pulse", g, ("Bx", "By"), samples), tmp_path / "p.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,Bx,By"
    assert lines[1] == "0,1,0"


def test_long_layout_has_x_column(tmp_path):
    text = export_table(_long(), tmp_path / "v.csv").read_text().splitlines()
    assert text[0] == "t,x,V"
    assert len(text) == 1 + 5 * 7


@pytest.mark.parametrize("make", [_wide, _long])
def test_json_export_matches_schema(tmp_path, make):
    doc = json.loads(export_table(make(), tmp_path / "t.json").read_text())
    jsonschema.validate(doc, load_schema("table"))


def test_empty_trajectory_is_schema_valid(tmp_path):
    table = ChannelTable("site-densities", TimeGrid(0.0, 1.0, 10), ("n_1", "n_2"), np.zeros((0, 2)))
    doc = json.loads(export_table(table, tmp_path / "e.json").read_text())
    jsonschema.validate(doc, load_schema("table"))
    assert doc["samples"] == []


def test_exports_are_byte_identical(tmp_path):
    a = export_table(_wide(3), tmp_path / "a.json").read_bytes()
    b = export_table(_wide(3), tmp_path / "b.json").read_bytes()
    assert a == b


def test_write_json_is_deterministic(tmp_path):
    doc = {"b": np.float64(0.1), "a": [np.int64(2), np.arange(3)], "c": {"z": True, "y": None}}
    first = write_json(doc, tmp_path / "1.json").read_bytes()
    shuffled = {"c": {"y": None, "z": True}, "a": [2, [0, 1, 2]], "b": 0.1}
    assert write_json(shuffled, tmp_path / "2.json").read_bytes() == first


def test_write_error_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    target = blocker / "sub" / "p.csv"
    with pytest.raises(PulseforgeError, match="sub"):
        export_table(_wide(), target)


def test_read_error_names_the_path(tmp_path):
    missing = tmp_path / "missing.csv"
    with pytest.raises(PulseforgeError, match="missing.csv"):
        import_table(missing)


def test_unknown_format_is_rejected(tmp_path):
    with pytest.raises(InputError):
        export_table(_wide(), tmp_path / "p.xlsx")


def test_non_uniform_time_column_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,a\n0,1\n0.5,1\n0.7,1\n")
    with pytest.raises(InputError):
        import_table(path)


def test_non_finite_samples_are_rejected():
    with pytest.raises(InputError):
        ChannelTable("x", TimeGrid(0.0, 1.0, 2), ("a",), np.array([[0.0], [np.nan], [1.0]]))


def test_reserved_channel_names_are_rejected():
    with pytest.raises(InputError):
        ChannelTable("x", TimeGrid(0.0, 1.0, 2), ("t",), np.zeros((3, 1)))


def test_stride_keeps_endpoints():
    table = _wide(n_steps=20).strided(5)
    assert len(table.grid) == 5
    assert table.grid.times[-1] == 1.3
    with pytest.raises(InputError):
        _wide(n_steps=20).strided(3)
