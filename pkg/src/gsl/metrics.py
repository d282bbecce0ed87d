"""Append-only CSV metrics, one row per training epoch.

Formatting is deliberately rigid (repr of the float64 value): equivalence
checks between training modes diff these files byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ContractError

BASE_COLUMNS = ("epoch", "total_samples", "mean_return", "std_return",
                "success_rate", "policy_loss", "value_loss", "entropy")
INT_COLUMNS = ("epoch", "total_samples")


class MetricsWriter:

    def __init__(self, path, extra_columns=()):
        self.path = Path(path)
        self.columns = BASE_COLUMNS + tuple(extra_columns)
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(",".join(self.columns) + "\n")

    def append(self, row):
        missing = set(self.columns) - set(row)
        if missing:
            raise ContractError(f"metrics row missing {sorted(missing)}")
        cells = []
        for col in self.columns:
            v = row[col]
            cells.append(str(int(v)) if col in INT_COLUMNS else repr(float(v)))
        with self.path.open("a") as f:
            f.write(",".join(cells) + "\n")


def read_metrics(path):
    """Columns as float64 arrays keyed by name."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if not lines[1:]:
        return {name: np.array([]) for name in header}
    body = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    return {name: body[:, i] for i, name in enumerate(header)}
