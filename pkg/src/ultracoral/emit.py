"""Output formats: CSV time series and event logs, JSON trees, SVG and L-system strings.

Floats are written with ``repr``, the shortest text that reads back to the
same double, so CSV and JSON output is lossless and byte-stable. SVG
coordinates are rounded to 6 decimals.
"""

from __future__ import annotations

import io
import json
import math
import os
import re
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .growth import BranchNode, CoralTree, tree_metrics
from .kinetics import SpeciesState
from .system import EventRecord

SCHEMA_VERSION = 1


class OutputError(OSError):
    """Writing an output file failed."""


def write_atomic(path: str, data: str | bytes) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = None
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp and os.path.exists(tmp):
            os.unlink(tmp)
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _num(x) -> str:
    return repr(float(x))


# ------------------------------------------------------------------ CSV

def timeseries_header(n: int) -> list[str]:
    return ["t"] + [f"{s}_{i}" for s in "uvw" for i in range(n)]


def emit_timeseries(t, y) -> str:
    """CSV with header ``t,u_0..,v_0..,w_0..`` and one row per sample."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size == 0:
        raise ValueError("empty trajectory")
    if y.ndim != 2 or y.shape[0] != t.size or y.shape[1] % 3:
        raise ValueError("y must have shape (len(t), 3n)")
    buf = io.StringIO()
    buf.write(",".join(timeseries_header(y.shape[1] // 3)) + "\n")
    for ti, row in zip(t.tolist(), y.tolist()):
        buf.write(",".join(map(repr, [ti, *row])) + "\n")
    return buf.getvalue()


EVENT_HEADER = ("branch", "kind", "time", "u", "v", "w", "omega")


def emit_events(events) -> str:
    lines = [",".join(EVENT_HEADER)]
    for e in events:
        lines.append(",".join([str(e.branch), e.kind] + [_num(x) for x in (e.time, e.u, e.v, e.w, e.omega)]))
    return "\n".join(lines) + "\n"


def parse_events(text: str) -> list[EventRecord]:
    rows = text.strip().splitlines()
    if not rows or tuple(rows[0].split(",")) != EVENT_HEADER:
        raise ValueError("not an event log")
    out = []
    for r in rows[1:]:
        b, kind, *nums = r.split(",")
        out.append(EventRecord(int(b), kind, *map(float, nums)))
    return out


# ------------------------------------------------------------------ JSON

def _state(s: SpeciesState | None):
    return None if s is None else [s.u, s.v, s.w]


def node_to_dict(node: BranchNode) -> dict:
    return {
        "path": list(node.path),
        "birth_time": node.birth_time,
        "level_start": node.level_start,
        "crossing_time": node.crossing_time,
        "lifetime": node.lifetime,
        "omega": node.omega,
        "halted": node.halted,
        "truncated": node.truncated,
        "continuation": node.continuation,
        "birth_state": _state(node.birth_state),
        "crossing_state": _state(node.crossing_state),
        "children": [node_to_dict(c) for c in node.children],
    }


def node_from_dict(d: dict) -> BranchNode:
    def st(x):
        return None if x is None else SpeciesState(*x)

    return BranchNode(
        path=tuple(d["path"]),
        birth_time=d["birth_time"],
        level_start=d["level_start"],
        birth_state=st(d["birth_state"]),
        crossing_time=d["crossing_time"],
        crossing_state=st(d["crossing_state"]),
        omega=d["omega"],
        halted=d["halted"],
        truncated=d["truncated"],
        lifetime=d["lifetime"],
        continuation=d["continuation"],
        children=[node_from_dict(c) for c in d["children"]],
    )


@dataclass
class TreeDocument:
    schema_version: int
    config: dict
    tree: dict
    levels: list
    metrics: dict

    @classmethod
    def from_tree(cls, tree: CoralTree) -> TreeDocument:
        levels = [
            {
                "level": lv.level, "t_start": lv.t_start, "t_end": lv.t_end,
                "compartments": lv.compartments, "active": lv.active,
                "events": [asdict(e) for e in lv.events],
            }
            for lv in tree.levels
        ]
        return cls(
            SCHEMA_VERSION, tree.config,
            {"p": tree.p, "final_level": tree.final_level, "root": node_to_dict(tree.root)},
            levels, asdict(tree_metrics(tree)),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> TreeDocument:
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema_version')!r}")
        return cls(**d)

    def root(self) -> BranchNode:
        return node_from_dict(self.tree["root"])


# ------------------------------------------------------------------ SVG

@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    path: tuple[int, ...]
    halted_leaf: bool


def _fan(p: int, angle: float) -> list[float]:
    if p == 1:
        return [0.0]
    return [angle * (1 - 2 * c / (p - 1)) for c in range(p)]


def segments(root: BranchNode, angle: float = 25.0, length_scale: float = 10.0) -> list[Segment]:
    """Line segments for the tree, root at the origin growing along +y."""
    out = []
    stack = [(root, 0.0, 0.0, 90.0)]
    while stack:
        node, x, y, heading = stack.pop()
        length = (node.lifetime or 0.0) * length_scale
        rad = math.radians(heading)
        x1, y1 = x + length * math.cos(rad), y + length * math.sin(rad)
        out.append(Segment(x, y, x1, y1, node.path, node.halted and not node.children))
        fan = _fan(len(node.children), angle)
        for child, turn in reversed(list(zip(node.children, fan))):
            stack.append((child, x1, y1, heading + turn))
    return out


def _f(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def emit_svg(root: BranchNode, angle: float = 25.0, length_scale: float = 10.0) -> str:
    segs = segments(root, angle, length_scale)
    xs = [c for s in segs for c in (s.x0, s.x1)]
    ys = [c for s in segs for c in (s.y0, s.y1)]
    pad = 0.05 * max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    x_min, x_max = min(xs) - pad, max(xs) + pad
    y_min, y_max = min(ys) - pad, max(ys) + pad
    width, height = x_max - x_min, y_max - y_min
    # flip y so the coral grows upwards on screen
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_f(x_min)} {_f(-y_max)} {_f(width)} {_f(height)}">',
        f'<g stroke="#7a4b2a" stroke-width="{_f(pad / 5)}" stroke-linecap="round" fill="none">',
    ]
    marks = []
    for s in segs:
        label = "".join(map(str, s.path)) or "root"
        lines.append(
            f'<line x1="{_f(s.x0)}" y1="{_f(-s.y0)}" x2="{_f(s.x1)}" y2="{_f(-s.y1)}" data-path="{label}"/>'
        )
        if s.halted_leaf:
            marks.append(f'<circle cx="{_f(s.x1)}" cy="{_f(-s.y1)}" r="{_f(pad / 3)}" class="halted"/>')
    lines.append("</g>")
    if marks:
        lines.append('<g fill="#c0392b" stroke="none">')
        lines.extend(marks)
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ L-system

def _turn(a: float) -> str:
    return f"+({_num(a)})" if a >= 0 else f"-({_num(-a)})"


def emit_lsystem(root: BranchNode, angle: float = 25.0) -> str:
    """Bracketed string ``F(L)[+(a)...][-(a)...]`` with L the branch lifetime."""
    parts = []

    def visit(node):
        parts.append(f"F({_num(node.lifetime or 0.0)})")
        for child, turn in zip(node.children, _fan(len(node.children), angle)):
            parts.append("[" + _turn(turn))
            visit(child)
            parts.append("]")

    visit(root)
    return "".join(parts)


@dataclass
class LNode:
    length: float
    children: list  # of (turn angle, LNode)


_TOKEN = re.compile(r"F\(([^()]*)\)|([+-])\(([^()]*)\)|(\[)|(\])")


def parse_lsystem(text: str) -> LNode:
    """Inverse of :func:`emit_lsystem`: recovers topology, lengths and turn angles."""
    tokens = []
    pos = 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if not mt:
            raise ValueError(f"unexpected character at {pos}: {text[pos]!r}")
        tokens.append(mt)
        pos = mt.end()
    i = 0

    def node():
        nonlocal i
        if i >= len(tokens) or tokens[i].group(1) is None:
            raise ValueError("expected F(...)")
        out = LNode(float(tokens[i].group(1)), [])
        i += 1
        while i < len(tokens) and tokens[i].group(4):
            i += 1
            tk = tokens[i] if i < len(tokens) else None
            if tk is None or tk.group(2) is None:
                raise ValueError("expected a turn after '['")
            a = float(tk.group(3)) * (1 if tk.group(2) == "+" else -1)
            i += 1
            child = node()
            if i >= len(tokens) or not tokens[i].group(5):
                raise ValueError("unbalanced brackets")
            i += 1
            out.children.append((a, child))
        return out

    tree = node()
    if i != len(tokens):
        raise ValueError("trailing tokens")
    return tree
