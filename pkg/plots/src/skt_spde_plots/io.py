"""Reading and validating the statistics CSV.

The expected schema is the one produced by the simulation CLI: one row per
(save time, species, field) with columns

    t,species,field,mean,var,stderr,p_moment

Scalar fields carry the species label "all".
"""

import csv

import numpy as np

SCHEMA = ("t", "species", "field", "mean", "var", "stderr", "p_moment")


class SchemaMismatchError(ValueError):
    """Raised when the CSV header does not match the documented schema."""

    def __init__(self, found):
        self.found = tuple(found)
        missing = [c for c in SCHEMA if c not in found]
        extra = [c for c in found if c not in SCHEMA]
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected columns: {', '.join(extra)}")
        if not parts:
            parts.append(f"column order must be {', '.join(SCHEMA)}; got {', '.join(found)}")
        super().__init__("schema mismatch — " + "; ".join(parts))


class EmptySelectionError(ValueError):
    """Raised when no rows match the requested field."""


def read_stats(path):
    """Parse the CSV into row dicts with numeric columns converted to float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError([]) from None
        if tuple(header) != SCHEMA:
            raise SchemaMismatchError(header)
        rows = []
        for raw in reader:
            row = dict(zip(SCHEMA, raw))
            for col in ("t", "mean", "var", "stderr", "p_moment"):
                row[col] = float(row[col])
            rows.append(row)
    return rows


def select_field(rows, field):
    """Group one field into per-species time series.

    Returns {species_label: {"t": array, "mean": array, "stderr": array}}
    with each series sorted by time.  Raises EmptySelectionError when the
    field does not appear in the data (e.g. a header-only CSV).
    """
    groups = {}
    for row in rows:
        if row["field"] == field:
            groups.setdefault(row["species"], []).append(row)
    if not groups:
        raise EmptySelectionError(f"empty selection: no rows with field {field!r}")
    out = {}
    for species, items in sorted(groups.items()):
        items.sort(key=lambda r: r["t"])
        out[species] = {
            "t": np.array([r["t"] for r in items]),
            "mean": np.array([r["mean"] for r in items]),
            "stderr": np.array([r["stderr"] for r in items]),
        }
    return out


def available_fields(rows):
    return sorted({r["field"] for r in rows})
