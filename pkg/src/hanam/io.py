"""CSV readers and atomic writers for the batch pipeline.

Readers reject malformed input with errors naming the file, line, and
expected shape. Writers go through a write-then-rename so failures never
leave partial outputs behind.
"""

import json
import os
import tempfile

import numpy as np

from .exceptions import ValidationError
from .network import Adjacency, row_normalize

__all__ = [
    "Covariates",
    "read_edge_list",
    "read_covariates",
    "read_outcome",
    "atomic_write_text",
    "write_json",
    "write_csv_rows",
]


class Covariates:
    """Parsed node covariates: design matrix plus the raw columns.

    ``design`` carries the intercept first, then continuous columns and
    indicator expansions of categorical columns (first level in sorted
    order is the reference). ``raw_columns`` keeps the original values
    with their kind for building dyadic covariates.
    """

    def __init__(self, ids, design, column_names, raw_columns):
        self.ids = list(ids)
        self.design = design
        self.column_names = column_names
        self.raw_columns = raw_columns  # list of (name, kind, values)
        self.n = len(self.ids)

    def raw_matrix(self):
        """(n, q) matrix of raw column values (categoricals as level codes)."""
        cols = []
        categorical = []
        for idx, (name, kind, values) in enumerate(self.raw_columns):
            if kind == "categorical":
                levels = sorted(set(values))
                lookup = {lev: float(i) for i, lev in enumerate(levels)}
                cols.append(np.array([lookup[v] for v in values]))
                categorical.append(idx)
            else:
                cols.append(np.asarray(values, dtype=float))
        if not cols:
            return np.empty((self.n, 0)), []
        return np.column_stack(cols), categorical


def _read_lines(path):
    try:
        with open(path) as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None


def read_edge_list(path, ids):
    """Read a ``src,dst[,weight]`` CSV into a row-normalized network.

    Node identifiers must appear in ``ids`` (the covariates file defines
    the node set and order). Duplicate edges accumulate their weights.
    """
    lines = _read_lines(path)
    if not lines:
        raise ValidationError("empty edge list", path=path, line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["src", "dst"] or len(header) > 3 or (
        len(header) == 3 and header[2] != "weight"
    ):
        raise ValidationError(
            f"expected header 'src,dst[,weight]', got {lines[0]!r}",
            path=path,
            line=1,
        )
    index = {node_id: i for i, node_id in enumerate(ids)}
    n = len(ids)
    entries = np.zeros((n, n))
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != len(header):
            raise ValidationError(
                f"expected {len(header)} fields, got {len(fields)}",
                path=path,
                line=lineno,
            )
        src, dst = fields[0], fields[1]
        for node in (src, dst):
            if node not in index:
                raise ValidationError(
                    f"unknown node id {node!r} (not in covariates file)",
                    path=path,
                    line=lineno,
                )
        if src == dst:
            raise ValidationError(
                f"self-loop on node {src!r}", path=path, line=lineno
            )
        weight = 1.0
        if len(fields) == 3:
            try:
                weight = float(fields[2])
            except ValueError:
                raise ValidationError(
                    f"non-numeric weight {fields[2]!r}", path=path, line=lineno
                ) from None
            if not np.isfinite(weight) or weight < 0:
                raise ValidationError(
                    f"weight must be finite and nonnegative, got {weight}",
                    path=path,
                    line=lineno,
                )
        entries[index[src], index[dst]] += weight
    return row_normalize(Adjacency(entries, node_labels=ids))


def read_covariates(path, standardize=False):
    """Read a covariates CSV with header ``id,<col>,...``.

    Numeric columns are continuous (optionally standardized); columns
    with any non-numeric value are categorical and expand to indicators
    against the sorted-first reference level.
    """
    lines = _read_lines(path)
    if not lines:
        raise ValidationError("empty covariates file", path=path, line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if not header or header[0] != "id":
        raise ValidationError(
            f"first header column must be 'id', got {lines[0]!r}",
            path=path,
            line=1,
        )
    col_names = header[1:]
    ids = []
    raw_rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != len(header):
            raise ValidationError(
                f"expected {len(header)} fields, got {len(fields)}",
                path=path,
                line=lineno,
            )
        if fields[0] in ids:
            raise ValidationError(
                f"duplicate node id {fields[0]!r}", path=path, line=lineno
            )
        ids.append(fields[0])
        raw_rows.append(fields[1:])
    if len(ids) < 2:
        raise ValidationError(
            f"need at least 2 nodes, found {len(ids)}", path=path, line=len(lines)
        )
    n = len(ids)
    raw_columns = []
    design_cols = [np.ones(n)]
    design_names = ["intercept"]
    for c, name in enumerate(col_names):
        values = [row[c] for row in raw_rows]
        numeric = True
        parsed = np.empty(n)
        for i, v in enumerate(values):
            try:
                parsed[i] = float(v)
            except ValueError:
                numeric = False
                break
        if numeric:
            if not np.all(np.isfinite(parsed)):
                raise ValidationError(
                    f"non-finite value in column {name!r}", path=path, line=1
                )
            col = parsed
            if standardize:
                sd = col.std(ddof=1)
                if sd > 0:
                    col = (col - col.mean()) / sd
            raw_columns.append((name, "continuous", col))
            design_cols.append(col)
            design_names.append(name)
        else:
            raw_columns.append((name, "categorical", values))
            levels = sorted(set(values))
            for level in levels[1:]:
                design_cols.append(
                    np.array([1.0 if v == level else 0.0 for v in values])
                )
                design_names.append(f"{name}={level}")
    design = np.column_stack(design_cols)
    return Covariates(ids, design, design_names, raw_columns)


def read_outcome(path, ids):
    """Read an ``id,y`` CSV ordered and validated against ``ids``."""
    lines = _read_lines(path)
    if not lines:
        raise ValidationError("empty outcome file", path=path, line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if header != ["id", "y"]:
        raise ValidationError(
            f"expected header 'id,y', got {lines[0]!r}", path=path, line=1
        )
    values = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != 2:
            raise ValidationError(
                f"expected 2 fields, got {len(fields)}", path=path, line=lineno
            )
        node, raw = fields
        if node in values:
            raise ValidationError(
                f"duplicate outcome for node {node!r}", path=path, line=lineno
            )
        try:
            v = float(raw)
        except ValueError:
            raise ValidationError(
                f"non-numeric outcome {raw!r}", path=path, line=lineno
            ) from None
        if not np.isfinite(v):
            raise ValidationError(
                f"non-finite outcome for node {node!r}", path=path, line=lineno
            )
        values[node] = v
    missing = [i for i in ids if i not in values]
    if missing:
        raise ValidationError(
            f"outcome missing for {len(missing)} node(s), e.g. {missing[0]!r}",
            path=path,
        )
    extra = [i for i in values if i not in set(ids)]
    if extra:
        raise ValidationError(
            f"outcome file has {len(extra)} unknown node(s), e.g. {extra[0]!r}",
            path=path,
        )
    return np.array([values[i] for i in ids])


def atomic_write_text(path, text):
    """Write text to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv_rows(path, columns, rows, header_comment=None):
    """Write rows (dicts) as CSV with a fixed column order."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
