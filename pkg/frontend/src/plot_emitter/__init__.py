"""Figure rendering for iclsim CSV outputs."""

from .figures import KINDS, PlotSpec, render
from .reader import (ALIGNMENT_COLUMNS, CONCENTRATION_COLUMNS, RISK_COLUMNS,
                     EmptySelectionError, SchemaError, Table, read_table,
                     read_risk_tables)

__version__ = "0.1.0"

__all__ = ["KINDS", "PlotSpec", "render", "RISK_COLUMNS",
           "ALIGNMENT_COLUMNS", "CONCENTRATION_COLUMNS", "SchemaError",
           "EmptySelectionError", "Table", "read_table", "read_risk_tables"]
