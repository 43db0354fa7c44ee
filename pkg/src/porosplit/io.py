"""Field output (legacy ASCII VTK) and CSV reports."""

import csv
import io
import math
from pathlib import Path

import numpy as np

from .mechanics import stress_invariants

CSV_FORMAT = "porosplit-csv 1"
VTK_HEXAHEDRON = 12


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def write_vtk(path, mesh, state, model=None):
    """Write pressure, stress invariants, fluid density and displacement as legacy VTK.

    Cell stresses are Gauss-point averages of the total stress.
    """
    nv, nc = mesh.n_vertices, mesh.n_cells
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\nporosplit state\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {nv} double\n")
    for x in mesh.vertices:
        out.write(" ".join(_fmt(c) for c in x) + "\n")
    out.write(f"CELLS {nc} {9 * nc}\n")
    for cell in mesh.cells:
        out.write("8 " + " ".join(str(int(v)) for v in cell) + "\n")
    out.write(f"CELL_TYPES {nc}\n")
    out.write(f"{VTK_HEXAHEDRON}\n" * nc)

    sigma = state.gauss.sigma.mean(axis=1)
    mean, vm = stress_invariants(sigma)
    cell_fields = [("pressure", state.p), ("mean_stress", mean), ("von_mises", vm)]
    if model is not None:
        cell_fields.append(("fluid_density", model.fluid_density_at(state.p)))
    out.write(f"CELL_DATA {nc}\n")
    for name, values in cell_fields:
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        out.write("".join(_fmt(v) + "\n" for v in values))
    out.write(f"POINT_DATA {nv}\nVECTORS displacement double\n")
    for u in np.reshape(state.u, (nv, 3)):
        out.write(" ".join(_fmt(c) for c in u) + "\n")
    Path(path).write_text(out.getvalue())
    return Path(path)


def read_vtk_sections(path):
    """Minimal reader returning the header counts and cell scalar arrays (for checks)."""
    lines = Path(path).read_text().splitlines()
    info, scalars = {}, {}
    i = 0
    while i < len(lines):
        words = lines[i].split()
        if words and words[0] in ("POINTS", "CELLS", "CELL_TYPES", "CELL_DATA", "POINT_DATA"):
            info[words[0]] = [int(w) for w in words[1:] if w.isdigit()]
            if words[0] == "CELLS":
                n = info["CELLS"][0]
                info["cell_rows"] = [list(map(int, l.split())) for l in lines[i + 1:i + 1 + n]]
            if words[0] == "CELL_TYPES":
                n = info["CELL_TYPES"][0]
                info["types"] = [int(l) for l in lines[i + 1:i + 1 + n]]
        if words and words[0] == "SCALARS":
            n = info["CELL_DATA"][0]
            scalars[words[1]] = np.array([float(l) for l in lines[i + 2:i + 2 + n]])
        i += 1
    return info, scalars


def write_csv(path, columns, rows, provenance=()):
    """CSV with a format line and ``# key = value`` provenance comments.

    Floats are written with ``repr`` so output is byte-identical for identical
    input.
    """
    buf = io.StringIO()
    buf.write(f"# {CSV_FORMAT}\n")
    for line in provenance:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


def read_csv(path):
    """Return ``(comments, header, rows)``; ``rows`` are dicts of strings."""
    comments, body = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError(f"{path}: no header row")
    if not comments or comments[0] != CSV_FORMAT:
        raise ValueError(f"{path}: not a {CSV_FORMAT} file")
    reader = csv.DictReader(body)
    return comments[1:], reader.fieldnames, list(reader)


def contraction_summary(rows):
    """Plain-text table of measured per-step contraction ratios from iteration rows."""
    by_step = {}
    for r in rows:
        by_step.setdefault(int(r["step"]), []).append(r)
    lines = [f"{'step':>5} {'iters':>6} {'mean ratio':>12} {'max ratio':>12} "
             f"{'max ledger err':>15} {'max balance err':>16} {'min young slack':>16}"]
    for step in sorted(by_step):
        reps = by_step[step]
        ratios = np.array([float(r["ratio"]) for r in reps])
        ratios = ratios[np.isfinite(ratios) & (ratios > 0)]
        mean = float(np.exp(np.mean(np.log(ratios)))) if len(ratios) else float("nan")
        mx = float(ratios.max()) if len(ratios) else float("nan")
        led = max(float(r["ledger_rel_error"]) for r in reps)
        bal = max(float(r["balance_rel_error"]) for r in reps)
        slack = min(float(r["young_slack"]) for r in reps)
        iters = max(int(r["m"]) for r in reps)
        lines.append(f"{step:>5} {iters:>6} {mean:>12.4e} {mx:>12.4e} {led:>15.3e} "
                     f"{bal:>16.3e} {slack:>16.3e}")
    return "\n".join(lines)
