"""Renders output documents as JSON, CSV or text and writes them to a file or stdout"""

import csv
import io
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel

FORMATS = ("json", "csv", "text")


def to_json(document: BaseModel) -> str:
    return document.model_dump_json(indent=2) + "\n"


def to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def to_text(lines: List[str]) -> str:
    return "\n".join(lines) + "\n"


def render(document: BaseModel, fmt: str = "json") -> str:
    """Documents provide csv_rows() and text_lines() next to their JSON form"""
    if fmt == "json":
        return to_json(document)
    if fmt == "csv":
        return to_csv(document.csv_rows())
    if fmt == "text":
        return to_text(document.text_lines())
    raise ValueError(f"Unknown output format: {fmt} (choose from {', '.join(FORMATS)})")


def write(document: BaseModel, fmt: str = "json", output: Optional[Union[str, Path]] = None) -> str:
    """Write the rendered document; '-' or None means stdout"""
    text = render(document, fmt)
    if output in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" on every platform
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    return text
