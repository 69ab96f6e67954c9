"""
Results table schema and I/O.

One row per analyzed work. Written as CSV (comma separated, header row,
UTF-8, floats in their shortest round-trip form, empty cells for missing
values) or JSON (an array of row objects), and read back with a schema check.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from src.errors import SchemaError, UsageError
from src.services.eccentricity import DEFAULT_COVERAGE_THRESHOLD, KEResult
from src.services.work_record import WorkRecord

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "id", "doi", "year", "field", "group", "n_refs", "internal_links", "ke",
    "coverage", "low_confidence", "cited_by_count", "fwci", "author_count",
]
BIN_COLUMNS = ["team_bin", "refcount_bin", "fwci_bin", "fetched_at"]
REQUIRED_COLUMNS = ["id", "ke", "n_refs", "year", "field"]
EXCLUSION_COLUMNS = ["ref", "reason", "message"]


def result_row(work: WorkRecord, result: KEResult, group: Optional[str] = None,
               threshold: float = DEFAULT_COVERAGE_THRESHOLD) -> Dict[str, Any]:
    """
    Join a work's metadata with its KE result.

    Args:
        work: Focal work
        result: KE result for the work
        group: Experimental group label, if any
        threshold: Coverage below which the row is flagged low-confidence

    Returns:
        Dict[str, Any]: Row keyed by RESULT_COLUMNS
    """
    row = result.to_row(threshold)
    return {
        "id": work.id,
        "doi": work.doi,
        "year": work.publication_year,
        "field": work.field_category.value,
        "group": group,
        "n_refs": row["n_refs"],
        "internal_links": row["internal_links"],
        "ke": row["ke"],
        "coverage": row["coverage"],
        "low_confidence": row["low_confidence"],
        "cited_by_count": work.cited_by_count,
        "fwci": work.fwci,
        "author_count": work.author_count,
    }


def exclusions_path(output: Union[str, Path]) -> Path:
    """'results.csv' -> 'results.exclusions.csv'"""
    return Path(output).with_suffix(".exclusions.csv")


def results_frame(rows: Sequence[Dict[str, Any]], columns: Sequence[str] = RESULT_COLUMNS) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    if "fwci" in frame.columns:
        frame["fwci"] = pd.to_numeric(frame["fwci"], errors="coerce")
    return frame


def write_results(rows: Sequence[Dict[str, Any]], path: Union[str, Path], output_format: str = "csv",
                  columns: Sequence[str] = RESULT_COLUMNS) -> Path:
    """
    Write result rows to CSV or JSON.

    Args:
        rows: Row dicts (missing keys become empty cells)
        path: Destination file
        output_format: 'csv' or 'json'
        columns: Column order

    Returns:
        Path: File written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if output_format == "json":
        records = [{c: row.get(c) for c in columns} for row in rows]
        with open(path, "w", encoding="utf-8") as f:
            json.dump(records, f, indent=2, ensure_ascii=False)
            f.write("\n")
    elif output_format == "csv":
        results_frame(rows, columns).to_csv(
            path, index=False, na_rep="", lineterminator="\n"
        )
    else:
        raise UsageError(f"unsupported output format: {output_format}")

    logger.info(f"Wrote {len(rows)} result row(s) to {path}")
    return path


def write_exclusions(rows: Sequence[Dict[str, str]], path: Union[str, Path]) -> Path:
    path = Path(path)
    pd.DataFrame(list(rows), columns=EXCLUSION_COLUMNS).to_csv(
        path, index=False, lineterminator="\n"
    )
    return path


def load_results(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read a results file and validate its schema.

    Args:
        path: CSV or JSON results file

    Returns:
        pd.DataFrame: Results with numeric KE and count columns
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"results file not found: {path}")

    text_columns = {"id": str, "doi": str, "field": str, "group": str}
    if path.suffix.lower() == ".json":
        try:
            with open(path, "r", encoding="utf-8") as f:
                frame = pd.DataFrame(json.load(f))
        except (json.JSONDecodeError, ValueError) as e:
            raise SchemaError(f"{path} is not a JSON array of result rows: {e}") from e
    else:
        try:
            frame = pd.read_csv(path, dtype=text_columns, float_precision="round_trip")
        except pd.errors.EmptyDataError as e:
            raise SchemaError(f"{path} is empty (no header row)") from e

    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(f"results file {path} lacks required column '{column}'")

    for column in ("ke", "n_refs", "year", "coverage", "cited_by_count", "fwci", "author_count"):
        if column in frame.columns:
            try:
                frame[column] = pd.to_numeric(frame[column])
            except (TypeError, ValueError) as e:
                raise SchemaError(f"column '{column}' in {path} is not numeric") from e

    if frame["ke"].isna().any():
        raise SchemaError(f"column 'ke' in {path} has missing values")
    if ((frame["ke"] < 0) | (frame["ke"] > 1)).any():
        raise SchemaError(f"column 'ke' in {path} has values outside [0, 1]")

    if "low_confidence" in frame.columns:
        frame["low_confidence"] = frame["low_confidence"].map(
            lambda v: str(v).strip().lower() in ("true", "1")
        )
    return frame


def frame_rows(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    """DataFrame rows as plain dicts with None for missing cells."""
    return frame.astype(object).where(frame.notna(), None).to_dict("records")
