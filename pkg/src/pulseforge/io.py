"""Bit-exact export and import of pulses and trajectories.

Every sampled signal is written as a :class:`ChannelTable`: a time grid, a list
of channel names and one row of samples per time step. Two layouts exist:

* ``wide``: one row per time, columns ``t,<channel...>``.
* ``long``: spatial fields, one row per ``(t, x)`` pair, columns ``t,x,<channel...>``.

Floats are rendered with 17 significant digits, so re-reading a file yields
the in-memory arrays bit for bit. Files carry no timestamps; identical inputs
give byte-identical files.
"""
from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import SpatialGrid, TimeGrid
from .errors import InputError, PulseforgeError

__all__ = [
    "SCHEMA_VERSION",
    "ChannelTable",
    "export_table",
    "import_table",
    "export_pulse",
    "write_json",
    "load_schema",
    "format_float",
]

SCHEMA_VERSION = "1"
FORMATS = ("csv", "json")


def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip any double exactly."""
    x = float(x)
    if not np.isfinite(x):
        raise InputError(f"cannot export non-finite value {x!r}")
    return format(x, ".17g")


@dataclass(frozen=True)
class ChannelTable:
    """Named real channels sampled on a time grid (and optionally on ``x``).

    ``samples`` has shape ``(n_t, n_channels)`` in the wide layout and
    ``(n_t, n_x, n_channels)`` in the long layout. ``meta`` holds scalar
    parameters needed to interpret the channels (for example the hopping of an
    on-site potential pulse); it is written to JSON only.
    """

    kind: str
    grid: TimeGrid
    channels: tuple[str, ...]
    samples: np.ndarray
    x: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.float64)
        chans = tuple(str(c) for c in self.channels)
        if len(set(chans)) != len(chans) or any(c in ("t", "x") for c in chans):
            raise InputError(f"channel names must be unique and not 't'/'x': {chans}")
        if self.x is None:
            if s.ndim != 2 or s.shape[1] != len(chans):
                raise InputError(f"wide samples must have shape (n_t, {len(chans)}), got {s.shape}")
        else:
            x = np.asarray(self.x, dtype=np.float64)
            if x.ndim != 1 or s.ndim != 3 or s.shape[1:] != (x.size, len(chans)):
                raise InputError(
                    f"long samples must have shape (n_t, {np.size(self.x)}, {len(chans)}), got {s.shape}"
                )
            x = x.copy()
            x.setflags(write=False)
            object.__setattr__(self, "x", x)
        if s.shape[0] not in (0, len(self.grid)):
            raise InputError(f"{s.shape[0]} sample rows for a grid of {len(self.grid)} points")
        if not np.all(np.isfinite(s)):
            raise InputError("channel samples contain non-finite values")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "channels", chans)

    @property
    def layout(self) -> str:
        return "wide" if self.x is None else "long"

    def channel(self, name: str) -> np.ndarray:
        return self.samples[..., self.channels.index(name)]

    def strided(self, stride: int) -> "ChannelTable":
        """Every ``stride``-th time row; ``stride`` must divide ``n_steps``."""
        if stride == 1:
            return self
        g = self.grid
        if stride < 1 or g.n_steps % stride:
            raise InputError(f"stride {stride} must divide n_steps={g.n_steps}")
        grid = TimeGrid(g.t_start, g.t_end, g.n_steps // stride)
        return ChannelTable(self.kind, grid, self.channels, self.samples[::stride], self.x, dict(self.meta))

    @classmethod
    def from_space_time(
        cls, kind: str, grid: TimeGrid, space: SpatialGrid, fields: dict[str, np.ndarray], meta=None
    ) -> "ChannelTable":
        samples = np.stack([np.asarray(v, np.float64) for v in fields.values()], axis=-1)
        return cls(kind, grid, tuple(fields), samples, space.x, dict(meta or {}))


# --------------------------------------------------------------------------
# writers


def _rows(table: ChannelTable) -> Iterable[list[str]]:
    times = table.grid.times
    if table.layout == "wide":
        for k in range(table.samples.shape[0]):
            yield [format_float(times[k]), *map(format_float, table.samples[k])]
    else:
        xs = [format_float(v) for v in table.x]
        for k in range(table.samples.shape[0]):
            tk = format_float(times[k])
            block = table.samples[k]
            for i, xi in enumerate(xs):
                yield [tk, xi, *map(format_float, block[i])]


def _header(table: ChannelTable) -> list[str]:
    return ["t", *(["x"] if table.layout == "long" else []), *table.channels]


def _csv_text(table: ChannelTable) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(table))
    w.writerows(_rows(table))
    return buf.getvalue()


def _json_scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(v)


def _json_text(table: ChannelTable) -> str:
    g = table.grid
    parts = [
        "{",
        f'"schema_version":{json.dumps(SCHEMA_VERSION)},',
        f'"kind":{json.dumps(table.kind)},',
        f'"layout":{json.dumps(table.layout)},',
        '"grid":{"t_start":%s,"t_end":%s,"n_steps":%d},'
        % (format_float(g.t_start), format_float(g.t_end), g.n_steps),
        '"meta":{%s},' % ",".join(f"{json.dumps(k)}:{_json_scalar(v)}" for k, v in sorted(table.meta.items())),
        f'"channels":{json.dumps(list(table.channels))},',
    ]
    if table.x is not None:
        parts.append('"x":[%s],' % ",".join(map(format_float, table.x)))
    rows = ",\n".join("[" + ",".join(r) + "]" for r in _rows(table))
    parts.append('"samples":[\n' + rows + "\n]}\n" if rows else '"samples":[]}\n')
    return "\n".join(parts)


def _fmt_from(path: Path, fmt: str | None) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r} for {path}; expected one of {FORMATS}")
    return fmt


def export_table(table: ChannelTable, path: str | Path, fmt: str | None = None) -> Path:
    """Write ``table`` as CSV or JSON (format from ``fmt`` or the file suffix).

    CSV files hold only the header and sample rows; JSON files also carry the
    grid, layout, kind and ``meta``.

    Raises
    ------
    PulseforgeError
        On IO failure, with the path in the message.
    """
    path = Path(path)
    fmt = _fmt_from(path, fmt)
    text = _csv_text(table) if fmt == "csv" else _json_text(table)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise PulseforgeError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


export_pulse = export_table


# --------------------------------------------------------------------------
# readers


def _grid_from_times(times: Sequence[float]) -> TimeGrid:
    t = np.asarray(times, dtype=np.float64)
    if t.size < 3:
        raise InputError("a CSV table needs at least three time rows to define its grid")
    # the exported grid is linspace(t0, t1, n+1); rebuild it and demand an exact match
    grid = TimeGrid(float(t[0]), float(t[-1]), t.size - 1)
    if not np.array_equal(grid.times, t):
        raise InputError("CSV time column is not a uniform grid")
    return grid


def _read_csv(path: Path, kind: str | None) -> ChannelTable:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        body = [[float(v) for v in row] for row in reader if row]
    if not header or header[0] != "t":
        raise InputError(f"{path}: first column must be 't'")
    long = len(header) > 1 and header[1] == "x"
    channels = tuple(header[2:] if long else header[1:])
    data = np.array(body, dtype=np.float64).reshape(-1, len(header))
    if not long:
        return ChannelTable(kind or "table", _grid_from_times(data[:, 0]), channels, data[:, 1:])
    t_vals = np.unique(data[:, 0])
    n_x = data.shape[0] // max(t_vals.size, 1)
    block = data.reshape(t_vals.size, n_x, len(header))
    return ChannelTable(
        kind or "table", _grid_from_times(block[:, 0, 0]), channels, block[:, :, 2:], block[0, :, 1]
    )


def _read_json(path: Path) -> ChannelTable:
    doc = json.loads(path.read_text(encoding="utf-8"))
    g = doc["grid"]
    grid = TimeGrid(float(g["t_start"]), float(g["t_end"]), int(g["n_steps"]))
    channels = tuple(doc["channels"])
    samples = np.array(doc["samples"], dtype=np.float64)
    x = doc.get("x")
    if x is None:
        samples = samples.reshape(-1, 1 + len(channels))[:, 1:]
    else:
        x = np.array(x, dtype=np.float64)
        samples = samples.reshape(-1, x.size, 2 + len(channels))[:, :, 2:]
    return ChannelTable(doc["kind"], grid, channels, samples, x, dict(doc.get("meta", {})))


def import_table(path: str | Path, fmt: str | None = None, kind: str | None = None) -> ChannelTable:
    """Read a table written by :func:`export_table`.

    CSV files carry no kind; pass ``kind`` to label the result.
    """
    path = Path(path)
    fmt = _fmt_from(path, fmt)
    try:
        return _read_csv(path, kind) if fmt == "csv" else _read_json(path)
    except OSError as exc:
        raise PulseforgeError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, PulseforgeError):
            raise
        raise InputError(f"malformed table {path}: {exc}") from exc


# --------------------------------------------------------------------------
# JSON documents and schemas


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def write_json(doc: dict, path: str | Path) -> Path:
    """Deterministic JSON (sorted keys, fixed indentation)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PulseforgeError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def load_schema(name: str) -> dict:
    """A JSON schema shipped with the package, e.g. ``"table"`` or ``"config"``."""
    ref = resources.files("pulseforge") / "schemas" / f"{name}.v{SCHEMA_VERSION}.json"
    return json.loads(ref.read_text(encoding="utf-8"))
