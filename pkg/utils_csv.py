# utils_csv.py
from __future__ import annotations

import csv
from typing import Any, Iterator

from errors import CsvFormatError


def iter_csv_rows(path: str, header: list[str], delimiter: str = ",") -> Iterator[tuple[int, dict[str, str]]]:
    """
    Yields (line_number, row) and insists on the exact header; short or long rows
    raise CsvFormatError with their line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter=delimiter)
        first = next(reader, None)
        if first is None:
            raise CsvFormatError(path, 1, "empty file, header missing")
        if first != header:
            raise CsvFormatError(path, 1, f"unexpected header {first!r}, expected {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, dict(zip(header, row))


def write_csv_rows(path: str, rows: list[dict[str, Any]], fieldnames: list[str], delimiter: str = ",") -> None:
    # LF endings on every platform
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, delimiter=delimiter, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
