"""Text formats: ``LCKF1`` grid fields, ``LCKMA1`` problem files and run reports."""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chart_calculus import GridSpec, ScalarField
from .transverse_ma import SolverConfig


class FormatError(ValueError):
    pass


def _num(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# LCKF1


def dump_field(f: ScalarField) -> str:
    g = f.grid
    out = io.StringIO()
    out.write(f"LCKF1 2 {g.N} {_num(g.R)}\n")
    for c in range(2):
        for i in range(g.N):
            for j in range(g.N):
                out.write(f"{i} {j} {_num(f.values[c, i, j])}\n")
    return out.getvalue()


def _parse_field(lines: list[str], pos: int, order: int) -> tuple[ScalarField, int]:
    head = lines[pos].split()
    if not head or head[0] != "LCKF1":
        raise FormatError(f"unknown field magic {head[0] if head else '<empty>'!r}")
    if len(head) != 4:
        raise FormatError("LCKF1 header must be 'LCKF1 <ncharts> <N> <R>'")
    try:
        nch, N, R = int(head[1]), int(head[2]), float(head[3])
    except ValueError as exc:
        raise FormatError(f"bad LCKF1 header: {exc}") from None
    if nch != 2:
        raise FormatError("LCKF1 fields on CP^1 have exactly 2 charts")
    grid = GridSpec(N, R, order)
    vals = np.empty((2, N, N))
    pos += 1
    for c in range(2):
        for i in range(N):
            for j in range(N):
                if pos >= len(lines):
                    raise FormatError("truncated LCKF1 block")
                parts = lines[pos].split()
                if len(parts) != 3:
                    raise FormatError(f"line {pos + 1}: expected 'i j value'")
                if (int(parts[0]), int(parts[1])) != (i, j):
                    raise FormatError(f"line {pos + 1}: expected indices {i} {j}")
                v = float(parts[2])
                if not math.isfinite(v):
                    raise FormatError(f"line {pos + 1}: non-finite value")
                vals[c, i, j] = v
                pos += 1
    return ScalarField(grid, vals), pos


def load_field(text: str, order: int = 6) -> ScalarField:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty field file")
    f, pos = _parse_field(lines, 0, order)
    if any(l.strip() for l in lines[pos:]):
        raise FormatError("trailing data after LCKF1 block")
    return f


def write_field(f: ScalarField, path: str | Path) -> None:
    Path(path).write_text(dump_field(f))


def read_field(path: str | Path, order: int = 6) -> ScalarField:
    return load_field(Path(path).read_text(), order)


# ---------------------------------------------------------------------------
# LCKMA1


@dataclass
class ProblemFile:
    f: ScalarField
    grid: GridSpec
    config: SolverConfig


def dump_problem(f: ScalarField, cfg: SolverConfig = SolverConfig()) -> str:
    g = f.grid
    lines = ["LCKMA1", dump_field(f).rstrip("\n"), f"grid N={g.N} R={_num(g.R)} order={g.order}"]
    for fld in dataclasses.fields(cfg):
        v = getattr(cfg, fld.name)
        lines.append(f"{fld.name}={_num(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def load_problem(text: str) -> ProblemFile:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "LCKMA1":
        raise FormatError("problem file must start with 'LCKMA1'")
    if len(lines) < 2:
        raise FormatError("problem file has no field block")
    f, pos = _parse_field(lines, 1, 6)
    grid = None
    overrides: dict = {}
    types = {fld.name: fld.type for fld in dataclasses.fields(SolverConfig)}
    for k, line in enumerate(lines[pos:], start=pos + 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("grid "):
            kv = dict(item.split("=", 1) for item in line.split()[1:])
            try:
                grid = GridSpec(int(kv["N"]), float(kv["R"]), int(kv.get("order", 6)))
            except (KeyError, ValueError) as exc:
                raise FormatError(f"line {k}: bad grid spec ({exc})") from None
            continue
        if "=" not in line:
            raise FormatError(f"line {k}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise FormatError(f"line {k}: unknown config key {key!r}")
        overrides[key] = int(val) if types[key] in (int, "int") else float(val)
    if grid is None:
        raise FormatError("problem file has no grid line")
    if (grid.N, grid.R) != (f.grid.N, f.grid.R):
        raise FormatError("grid spec is inconsistent with the LCKF1 header")
    f = ScalarField(grid, f.values)
    return ProblemFile(f, grid, dataclasses.replace(SolverConfig(), **overrides))


def read_problem(path: str | Path) -> ProblemFile:
    return load_problem(Path(path).read_text())


# ---------------------------------------------------------------------------
# reports


def _render(v, indent: int) -> str:
    pad = "  " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f'{pad}  "{k}": {_render(x, indent + 1)}' for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_render(x, indent + 1) for x in v) + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return _num(v) if math.isfinite(v) else f'"{v}"'
    if v is None:
        return "null"
    s = str(v).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


def format_report(report: dict) -> str:
    """JSON text with insertion-ordered keys and 17-significant-digit numbers."""
    return _render(report, 0) + "\n"


def emit_report(report: dict, path: str | Path | None) -> str:
    text = format_report(report)
    if path is not None:
        Path(path).write_text(text)
    return text
