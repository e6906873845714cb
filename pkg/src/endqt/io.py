"""Stable CSV/JSON writers and figure rendering.

Every float leaves through ``fmt`` with 12 significant digits, so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .decoherence import DecoherenceTrace

PRECISION = 12


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == 0:
            return "0"  # folds -0.0
        return f"{x:.{PRECISION}g}"
    return str(x)


def _clean(obj):
    """Recursively round floats to 12 significant digits for JSON output."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return 0.0 if x == 0 else float(f"{x:.{PRECISION}g}")
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_columns(path: Path, columns: Mapping[str, np.ndarray]) -> Path:
    names = list(columns)
    return write_csv(path, names, zip(*(columns[n].tolist() for n in names)))


def write_trace(trace: DecoherenceTrace, path: Path) -> Path:
    z = trace.z_values
    return write_csv(path, ("t", "re_z", "im_z", "abs_z"), zip(trace.times.tolist(), z.real.tolist(),
                                                                 z.imag.tolist(), np.abs(z).tolist()))


def emit_plot_data(trace: DecoherenceTrace, path: Path) -> Path:
    """Two-column ``t,abs_z`` CSV for external plotting."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    return write_csv(path, ("t", "abs_z"), zip(trace.times.tolist(), trace.abs_z.tolist()))


def write_probability_table(path: Path, rows: Iterable[tuple]) -> Path:
    """Rows of ``(setting_a, setting_b, outcome_a, outcome_b, p)``."""
    return write_csv(path, ("setting_a", "setting_b", "outcome_a", "outcome_b", "p"), rows)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> Path:
    # no software/date metadata, keeps reruns identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    _pyplot().close(fig)
    return Path(path)


def plot_traces(traces: Mapping[int, DecoherenceTrace], path: Path) -> Path:
    """|z(t)| for several bath sizes, one panel each."""
    plt = _pyplot()
    n = len(traces)
    fig, axes = plt.subplots(n, 1, figsize=(6.4, 1.8 * n + 0.6), sharex=True, squeeze=False)
    for ax, (G, tr) in zip(axes[:, 0], sorted(traces.items())):
        ax.plot(tr.times, tr.abs_z, lw=0.8, color="C0")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("|z(t)|")
        ax.text(0.98, 0.85, f"G = {G}", transform=ax.transAxes, ha="right")
    axes[-1, 0].set_xlabel("t (s)")
    fig.tight_layout()
    return _save(fig, path)


def plot_step_summary(times: Sequence[float], abs_z: Sequence[float], differentiation: Sequence[float],
                      path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(times, abs_z, "o-", label="mean |z| at step end")
    ax.plot(times, differentiation, "s--", label="mean D*")
    ax.set_xlabel("event time (s)")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_bar(values: Mapping[str, float], path: Path, ylabel: str = "probability") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    keys = list(values)
    ax.bar(keys, [values[k] for k in keys], color="C0")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save(fig, path)
