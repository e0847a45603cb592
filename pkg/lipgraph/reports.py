"""Report emission and re-validation.

JSON reports carry a ``kind`` and a ``schema`` field and are written with
sorted keys. CSV reports start with the header comment
``# lipgraph-csv v<schema> kind=<kind> columns=<c1>,<c2>,...`` followed by
one row per trial or step. Neither format contains timestamps, so two runs
with the same configuration produce identical files.
"""

import csv
import io
import json
import logging
import math
import re
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Union

import numpy as np

from .exceptions import ReportFormatError
from .settings import setting

logger = logging.getLogger(__name__)

CSV_COLUMNS: Dict[str, List[str]] = {
    "mincut": ["trial", "weight", "feasible", "size"],
    "match": ["trial", "weight", "size"],
    "pip": ["trial", "value", "feasible", "size"],
    "stability": ["trial", "distance", "objective"],
    "trend": ["relative_delta", "delta", "mean_output_distance", "distance_sem", "lipschitz_quotient"],
    "sweep": ["step", "delta", "mean_output_distance", "distance_sem", "lipschitz_quotient"],
    "recourse": ["step", "recourse", "quotient", "lambda2", "spectral_quotient"],
}

REQUIRED_JSON_FIELDS: Dict[str, List[str]] = {
    "stability": ["algorithm", "instance_digest", "delta", "trials", "mean_output_distance",
                  "distance_sem", "lipschitz_quotient", "feasibility_rate", "objective_mean",
                  "objective_sem", "theory_bound", "tape_policy"],
    "mincut": ["algorithm", "instance_digest", "trials", "feasible_rate", "weight_mean"],
    "match": ["instance_digest", "trials", "fractional_objective", "weight_mean"],
    "pip": ["instance_digest", "trials", "gamma", "feasible_rate", "value_mean"],
    "trend": ["algorithm", "reports", "monotone"],
    "sweep": ["algorithm", "steps", "end_to_end", "c_sup", "subadditive"],
    "recourse": ["algorithm", "per_step", "total", "mean_quotient", "net_drift"],
}

_HEADER = re.compile(r"^# lipgraph-csv v(\d+) kind=([a-z]+) columns=([a-z0-9_,]+)$")


def jsonable(value: Any) -> Any:
    """Plain JSON types; numpy scalars/arrays become Python numbers/lists, sets sorted lists."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(v) for v in value)
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps_json(kind: str, body: Dict[str, Any]) -> str:
    document = dict(jsonable(body))
    document["kind"] = kind
    document["schema"] = setting("reports", "csv_schema_version")
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def dumps_csv(kind: str, rows: Iterable[Sequence[Any]]) -> str:
    columns = CSV_COLUMNS[kind]
    buffer = io.StringIO()
    version = setting("reports", "csv_schema_version")
    buffer.write(f"# lipgraph-csv v{version} kind={kind} columns={','.join(columns)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    for row in rows:
        if len(row) != len(columns):
            raise ReportFormatError(f"{kind} row has {len(row)} fields, expected {len(columns)}")
        writer.writerow(["" if v is None else jsonable(v) for v in row])
    return buffer.getvalue()


def emit(text: str, output: Optional[Union[str, Path]] = None, stream: Optional[TextIO] = None) -> None:
    if output is None:
        (stream or sys.stdout).write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")
        logger.info("wrote %s", output)


def _validate_json(text: str) -> Dict[str, Any]:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ReportFormatError(f"invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(document, dict):
        raise ReportFormatError("report must be a JSON object")
    kind = document.get("kind")
    if kind not in REQUIRED_JSON_FIELDS:
        raise ReportFormatError(f"unknown report kind {kind!r}")
    missing = [name for name in REQUIRED_JSON_FIELDS[kind] if name not in document]
    if missing:
        raise ReportFormatError(f"{kind} report is missing {missing}")
    if kind == "stability":
        _check_quotient(document)
    return {"kind": kind, "format": "json", "fields": len(document)}


def _check_quotient(report: Dict[str, Any]) -> None:
    delta, distance, quotient = report["delta"], report["mean_output_distance"], report["lipschitz_quotient"]
    if report["trials"] < 1:
        raise ReportFormatError("stability report needs trials >= 1")
    expected = distance / delta if delta else 0.0
    if not math.isclose(quotient, expected, rel_tol=1e-9, abs_tol=1e-12):
        raise ReportFormatError(f"lipschitz_quotient {quotient} != mean distance / delta = {expected}")


def _validate_csv(text: str) -> Dict[str, Any]:
    lines = text.splitlines()
    match = _HEADER.match(lines[0]) if lines else None
    if match is None:
        raise ReportFormatError("CSV report must start with '# lipgraph-csv v<N> kind=<kind> columns=...'")
    version, kind, columns = int(match.group(1)), match.group(2), match.group(3).split(",")
    if version != setting("reports", "csv_schema_version"):
        raise ReportFormatError(f"unsupported CSV schema version {version}")
    if CSV_COLUMNS.get(kind) != columns:
        raise ReportFormatError(f"columns {columns} do not match the {kind} schema")
    rows = 0
    for number, row in enumerate(csv.reader(lines[1:]), start=2):
        if len(row) != len(columns):
            raise ReportFormatError(f"line {number}: {len(row)} fields, expected {len(columns)}")
        for value in row:
            if value not in ("", "True", "False"):
                try:
                    float(value)
                except ValueError:
                    raise ReportFormatError(f"line {number}: non-numeric value {value!r}") from None
        rows += 1
    return {"kind": kind, "format": "csv", "rows": rows}


def validate_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a report written by this package; raises ReportFormatError on mismatch."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("# lipgraph-csv"):
        return _validate_csv(text)
    return _validate_json(text)
