"""Result records and their CSV / JSON forms.

Floats are written with ``repr`` so a record read back compares equal to
the one written. Complex values take two columns.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from . import __version__

COLUMNS = (
    "command", "inputs", "value_re", "value_im", "imag_residual", "quad_proxy",
    "trunc_proxy", "se", "n_paths", "seed", "wall_time", "version", "details",
)
_FLOATS = ("value_re", "value_im", "imag_residual", "quad_proxy", "trunc_proxy", "se", "wall_time")
_INTS = ("n_paths", "seed")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if hasattr(x, "item"):  # numpy scalar
        return _jsonable(x.item())
    return x


def _dump(d) -> str:
    return json.dumps(_jsonable(d), sort_keys=True, separators=(",", ":"))


@dataclass
class ResultRecord:
    command: str
    inputs: dict
    value_re: float | None = None
    value_im: float | None = None
    imag_residual: float | None = None
    quad_proxy: float | None = None
    trunc_proxy: float | None = None
    se: float | None = None
    n_paths: int | None = None
    seed: int | None = None
    wall_time: float | None = None
    version: str = __version__
    details: dict = field(default_factory=dict)

    @classmethod
    def from_quad(cls, command, inputs, res, **kw) -> "ResultRecord":
        v = complex(getattr(res, "complex_value", res.value))
        return cls(command, inputs, float(res.value), float(v.imag), float(res.imag_residual),
                   float(res.quad_proxy), float(res.trunc_proxy), **kw)

    def row(self) -> dict:
        out = {}
        for c in COLUMNS:
            v = getattr(self, c)
            if c in ("inputs", "details"):
                out[c] = _dump(v)
            elif v is None:
                out[c] = ""
            elif c in _FLOATS:
                out[c] = repr(float(v))
            else:
                out[c] = str(v)
        return out

    @classmethod
    def from_row(cls, row: dict) -> "ResultRecord":
        kw = {}
        for c in COLUMNS:
            s = row.get(c, "")
            if c in ("inputs", "details"):
                kw[c] = json.loads(s) if s else {}
            elif s == "" or s is None:
                kw[c] = None
            elif c in _FLOATS:
                kw[c] = float(s)
            elif c in _INTS:
                kw[c] = int(s)
            else:
                kw[c] = s
        return cls(**kw)

    def normalized(self) -> "ResultRecord":
        """The record as it reads back after a JSON round trip of its maps."""
        return ResultRecord.from_row(self.row())


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def from_csv(text: str):
    return [ResultRecord.from_row(r) for r in csv.DictReader(io.StringIO(text))]


def to_json(records) -> str:
    rows = []
    for r in records:
        d = {c: getattr(r, c) for c in COLUMNS}
        d["inputs"] = json.loads(_dump(r.inputs))
        d["details"] = json.loads(_dump(r.details))
        for c in _FLOATS:
            if d[c] is not None:
                d[c] = float(d[c])
        rows.append(d)
    return json.dumps(rows, sort_keys=True, indent=1) + "\n"


def from_json(text: str):
    out = []
    for d in json.loads(text):
        d = dict(d)
        d["inputs"] = _dump(d["inputs"])
        d["details"] = _dump(d["details"])
        for c in _FLOATS + _INTS:
            d[c] = "" if d.get(c) is None else repr(d[c])
        out.append(ResultRecord.from_row(d))
    return out


def dumps(records, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(records)
    if fmt == "json":
        return to_json(records)
    raise ValueError(f"unknown format {fmt!r}")


def loads(text: str, fmt: str):
    return from_csv(text) if fmt == "csv" else from_json(text)
