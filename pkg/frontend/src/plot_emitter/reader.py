"""Parsing of the delimited result files emitted by the iclsim CLI.

This package talks to the simulator only through its documented CSV
contracts; the column sets below mirror that documentation and nothing else.
Files are opened read-only and never modified.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

RISK_COLUMNS = ("config_hash", "seed", "method", "d", "r", "Q", "P", "m",
                "context_length", "risk_mean", "risk_stderr", "excess_risk",
                "wall_ms")
ALIGNMENT_COLUMNS = ("neuron", "mass_ratio", "cosine", "baseline")
CONCENTRATION_COLUMNS = ("context_length", "abs_error_mean",
                         "abs_error_stderr")

_NUMERIC = {"seed", "d", "r", "Q", "P", "m", "context_length", "neuron"}
_FLOAT = {"risk_mean", "risk_stderr", "excess_risk", "wall_ms", "mass_ratio",
          "cosine", "baseline", "abs_error_mean", "abs_error_stderr"}


class SchemaError(ValueError):
    """The input file does not match the documented column contract."""


class EmptySelectionError(ValueError):
    """No rows survived filtering; there is nothing to draw."""


@dataclass(frozen=True)
class Table:
    path: str
    columns: tuple[str, ...]
    rows: tuple[dict, ...]

    def filtered(self, **conditions) -> "Table":
        rows = tuple(r for r in self.rows
                     if all(r[k] == v for k, v in conditions.items()))
        return Table(self.path, self.columns, rows)

    def distinct(self, column: str) -> list:
        seen = []
        for r in self.rows:
            if r[column] not in seen:
                seen.append(r[column])
        return seen

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def _convert(name: str, raw: str):
    if name in _NUMERIC:
        return int(raw)
    if name in _FLOAT:
        return float(raw)
    return raw


def read_table(path, required_columns) -> Table:
    """Load a CSV and verify every required column is present, naming the
    first missing one in the error."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        for col in required_columns:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = []
        for raw in reader:
            if not raw:
                continue
            if len(raw) != len(header):
                raise SchemaError(f"{path}: row has {len(raw)} fields, "
                                  f"header has {len(header)}")
            rows.append({name: _convert(name, val)
                         for name, val in zip(header, raw)})
    return Table(str(path), tuple(header), tuple(rows))


def read_risk_tables(paths) -> Table:
    """Concatenate one or more risk CSVs into a single table."""
    tables = [read_table(p, RISK_COLUMNS) for p in paths]
    rows = tuple(r for t in tables for r in t.rows)
    return Table(";".join(t.path for t in tables), RISK_COLUMNS, rows)
