"""Deterministic CSV artifacts with a provenance header."""
from __future__ import annotations

import csv
import hashlib
import io

SCHEMA = 1


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def fmt(x) -> str:
    """Round-trippable text for ints, floats and complex parts."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def header_line(**fields) -> str:
    from . import __version__

    parts = [f"schema={SCHEMA}", f"version={__version__}"]
    parts += [f"{k}={fmt(v) if not isinstance(v, str) else v}" for k, v in fields.items()]
    return "# provenance " + " ".join(parts)


def table_text(columns, rows, **provenance) -> str:
    out = io.StringIO()
    out.write(header_line(**provenance) + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return out.getvalue()


def write_table(path, columns, rows, **provenance) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table_text(columns, rows, **provenance))


def read_table(path):
    """Return ``(provenance_dict, columns, rows_as_strings)``."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
        prov = dict(tok.split("=", 1) for tok in head.split()[2:] if "=" in tok)
        r = list(csv.reader(fh))
    return prov, r[0], r[1:]
