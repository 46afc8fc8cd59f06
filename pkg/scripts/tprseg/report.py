"""
ReportTable: the named, typed table every analysis returns, and its CSV/JSON emission.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from .models import DataError

logger = logging.getLogger(__name__)

KINDS = ("str", "int", "float", "bool")


class ReportError(DataError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    unit: str = ""

    def todict(self):
        return {"name": self.name, "kind": self.kind, "unit": self.unit}


def provenance(operation: str, parameters: Dict[str, Any], inputs: Iterable[str] = ()) -> Dict[str, Any]:
    inputs = sorted(inputs)
    digest = hashlib.sha256("\n".join(inputs).encode("utf-8")).hexdigest()
    return {
        "operation": operation,
        "parameters": _plain(parameters),
        "inputs": len(inputs),
        "input_digest": digest,
    }


def _plain(value):
    """Convert numpy scalars and containers into JSON-friendly Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _conforms(value, kind):
    if value is None:
        return True
    if kind == "str":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, (bool, np.bool_))
    if isinstance(value, (bool, np.bool_)):
        return False
    if kind == "int":
        return isinstance(value, (int, np.integer))
    return isinstance(value, (int, float, np.integer, np.floating))


@dataclass
class ReportTable:
    name: str
    columns: List[Column]
    rows: List[Sequence[Any]] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def column_names(self):
        return [c.name for c in self.columns]

    def validate(self):
        if not self.provenance:
            raise ReportError(f"table {self.name} has no provenance")
        for column in self.columns:
            if column.kind not in KINDS:
                raise ReportError(f"table {self.name}: column {column.name} has unknown kind {column.kind!r}")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ReportError(f"table {self.name}: row {i} has {len(row)} values for {len(self.columns)} columns")
            for value, column in zip(row, self.columns):
                if not _conforms(value, column.kind):
                    raise ReportError(
                        f"table {self.name}: row {i} value {value!r} is not of kind {column.kind} ({column.name})"
                    )
        return self

    def records(self):
        return [dict(zip(self.column_names, row)) for row in self.rows]

    def column(self, name):
        index = self.column_names.index(name)
        return [row[index] for row in self.rows]

    def to_frame(self):
        data = {}
        for index, column in enumerate(self.columns):
            values = [row[index] for row in self.rows]
            if column.kind == "int":
                data[column.name] = pd.array(values, dtype="Int64")
            elif column.kind == "float":
                data[column.name] = pd.Series(
                    [np.nan if v is None else float(v) for v in values], dtype="float64"
                )
            else:
                data[column.name] = pd.Series(values, dtype="object")
        return pd.DataFrame(data, columns=self.column_names)


def _round(value, digits):
    if value is None:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        if math.isnan(value) or math.isinf(value):
            return None
        return float(f"{value:.{digits}g}")
    return _plain(value)


def emit_table(table: ReportTable, fmt: str = "csv", digits: int = 6) -> bytes:
    table.validate()
    if fmt == "csv":
        text = table.to_frame().to_csv(
            index=False, lineterminator="\n", float_format=f"%.{digits}g", na_rep="",
        )
        return text.encode("utf-8")
    if fmt == "json":
        document = {
            "name": table.name,
            "columns": [c.todict() for c in table.columns],
            "rows": [
                {c.name: _round(value, digits) for c, value in zip(table.columns, row)}
                for row in table.rows
            ],
            "provenance": table.provenance,
        }
        return (json.dumps(document, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    raise ReportError(f"unknown table format {fmt!r}")


def write_table(table: ReportTable, directory, formats=("csv",), digits=6) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        path = directory / f"{table.name}.{fmt}"
        path.write_bytes(emit_table(table, fmt, digits))
        paths.append(path)
        logger.debug(f"Wrote {path} ({len(table.rows)} rows)")
    return paths
