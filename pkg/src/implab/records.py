"""Flat text artifacts: key-value records and indexed coefficient tables.

All outputs are plain delimiter-separated text so external plotting tools
can consume them directly.  Floats are rendered with 17 significant digits;
identical data therefore produces byte-identical files.

* record files: one ``key value`` pair per line,
* tables: one row per index/time, first column the index, the remaining
  columns coefficients,
* trajectory dumps: a ``(t, coeff_1 .. coeff_N)`` table, a file listing the
  discontinuity times, and a hits file with rows
  ``(T_i, surface, |pre|_alpha, |post|_alpha)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "format_value",
    "write_record",
    "read_record",
    "write_table",
    "read_table",
    "write_trajectory",
    "vector_line",
]


def format_value(v) -> str:
    """Deterministic text form: 17 significant digits for floats."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def write_record(path, mapping) -> None:
    """One ``key value`` pair per line, in mapping order."""
    with open(path, "w") as fh:
        for key, val in mapping.items():
            fh.write("%s %s\n" % (key, format_value(val)))


def read_record(path) -> dict:
    """Inverse of write_record; values stay strings."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition(" ")
            out[key] = val
    return out


def vector_line(x) -> str:
    """One-line serialization of a spectral coefficient vector."""
    return " ".join("%.17g" % v for v in np.asarray(x, dtype=float))


def write_table(path, index, values) -> None:
    """Rows ``index v_1 .. v_d``; ``index`` may be integer or time."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    index = np.asarray(index)
    if index.size != values.shape[0]:
        raise ValueError("index and value row counts differ")
    int_index = np.issubdtype(index.dtype, np.integer)
    with open(path, "w") as fh:
        for i, row in zip(index, values):
            head = "%d" % i if int_index else "%.17g" % i
            fh.write(head + " " + vector_line(row) + "\n")


def read_table(path):
    """Returns (index array, value array); index stays float."""
    rows = np.loadtxt(path, ndmin=2)
    return rows[:, 0], rows[:, 1:]


def write_trajectory(out_dir, name, traj, lap=None, alpha=0.5, stride=1) -> dict:
    """Dump a piecewise trajectory under ``out_dir/name*``.

    Writes ``<name>.txt`` (node rows), ``<name>_discontinuities.txt`` (hit
    or cut times, one per line) and, when hit records exist and ``lap`` is
    given, ``<name>_hits.txt``.  Returns the written paths.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t, states = traj.all_nodes()
    paths = {"trajectory": out_dir / ("%s.txt" % name)}
    write_table(paths["trajectory"], t[::stride], states[::stride])

    disc = traj.hit_times() if traj.hits else [s.t[0] for s in traj.segments[1:]]
    paths["discontinuities"] = out_dir / ("%s_discontinuities.txt" % name)
    with open(paths["discontinuities"], "w") as fh:
        for tv in disc:
            fh.write("%.17g\n" % tv)

    if traj.hits and lap is not None:
        paths["hits"] = out_dir / ("%s_hits.txt" % name)
        with open(paths["hits"], "w") as fh:
            for h in traj.hits:
                fh.write(
                    "%.17g %d %.17g %.17g\n"
                    % (
                        h.time,
                        h.surface,
                        lap.frac_norm(h.pre, alpha),
                        lap.frac_norm(h.post, alpha),
                    )
                )
    return {k: str(v) for k, v in paths.items()}
