"""Directed count relational data: dyad indexing, design construction, I/O.

Dyads are stored densely in row-major order by sender with the diagonal
skipped, so for ``n = 3`` the order is ``(1,2), (1,3), (2,1), (2,3), (3,1), (3,2)``.
Public functions take 1-based node ids; arrays are 0-based internally.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InvalidDyadError, SchemaError

__all__ = [
    "TERM_KINDS",
    "DyadicCovariateSpec",
    "EdgeTable",
    "NodeTable",
    "RelationalDataset",
    "Term",
    "build_design",
    "dyad_arrays",
    "dyad_from_index",
    "edge_index",
    "from_matrix",
    "load_dataset",
    "load_edgelist",
    "load_model_spec",
    "load_node_table",
    "to_matrix",
    "write_edgelist",
    "write_node_table",
]

TERM_KINDS = ("intercept", "sender", "receiver", "product", "absdiff", "edge", "log-edge")
_NODE_TERMS = {"sender", "receiver", "product", "absdiff"}
_EDGE_TERMS = {"edge", "log-edge"}


# ---------------------------------------------------------------------------
# Indexing
# ---------------------------------------------------------------------------


def edge_index(i: int, j: int, n: int) -> int:
    """Linear index of the directed dyad ``(i, j)`` with 1-based node ids."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise InvalidDyadError(f"dyad ({i}, {j}) out of range for n={n}")
    if i == j:
        raise InvalidDyadError(f"self-loop ({i}, {j}) is not a dyad")
    i0, j0 = i - 1, j - 1
    return i0 * (n - 1) + (j0 if j0 < i0 else j0 - 1)


def dyad_from_index(index: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`edge_index`."""
    if not 0 <= index < n * (n - 1):
        raise InvalidDyadError(f"index {index} out of range for n={n}")
    i0, r = divmod(index, n - 1)
    j0 = r if r < i0 else r + 1
    return i0 + 1, j0 + 1


def dyad_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based sender and receiver arrays in edge order."""
    senders = np.repeat(np.arange(n), n - 1)
    cols = np.tile(np.arange(n - 1), n)
    receivers = cols + (cols >= senders)
    return senders, receivers


def to_matrix(values, n: int, fill: float = 0.0) -> np.ndarray:
    """Scatter a per-dyad vector (or ``N x p`` array) into an ``n x n`` array.

    The diagonal is set to ``fill``.
    """
    values = np.asarray(values)
    s, r = dyad_arrays(n)
    out = np.full((n, n) + values.shape[1:], fill, dtype=np.result_type(values, float))
    out[s, r] = values
    return out


def from_matrix(mat) -> np.ndarray:
    mat = np.asarray(mat)
    n = mat.shape[0]
    s, r = dyad_arrays(n)
    return mat[s, r]


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RelationalDataset:
    """Dense directed count data on ``n`` nodes.

    Attributes
    ----------
    n : int
    y : ndarray, shape (n*n - n,)
        Counts in edge order.
    X : ndarray, shape (n*n - n, p)
    offsets : ndarray or None
        Additive log-exposure shifts of the linear predictor.
    names : tuple of str
        Coefficient names, one per column of ``X``.
    node_ids : tuple of str
        External node labels, position ``k`` is internal node ``k``.
    """

    n: int
    y: np.ndarray
    X: np.ndarray
    offsets: np.ndarray | None = None
    names: tuple[str, ...] = ()
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        n = int(self.n)
        if n < 3:
            raise DataError(f"need at least 3 nodes, got {n}")
        N = n * n - n
        y = np.asarray(self.y)
        if y.shape != (N,):
            raise DataError(f"expected {N} dyad counts for n={n}, got shape {y.shape}")
        if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.round(y)):
            raise DataError("counts must be finite nonnegative integers")
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != N:
            raise DataError(f"design must have {N} rows, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("design contains non-finite values")
        offsets = self.offsets
        if offsets is not None:
            offsets = np.asarray(offsets, dtype=float)
            if offsets.shape != (N,) or not np.all(np.isfinite(offsets)):
                raise DataError("offsets must be a finite vector with one entry per dyad")
            offsets = _frozen(offsets)
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} names for {X.shape[1]} columns")
        node_ids = tuple(str(v) for v in self.node_ids) or tuple(str(k + 1) for k in range(n))
        if len(node_ids) != n:
            raise DataError(f"{len(node_ids)} node ids for n={n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "node_ids", node_ids)

    @property
    def n_dyads(self) -> int:
        return self.n * self.n - self.n

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def linear_predictor(self, beta) -> np.ndarray:
        z = self.X @ np.asarray(beta, dtype=float)
        if self.offsets is not None:
            z = z + self.offsets
        return z

    def with_counts(self, y) -> "RelationalDataset":
        return RelationalDataset(self.n, y, self.X, self.offsets, self.names, self.node_ids)

    def relabel(self, perm: Sequence[int]) -> "RelationalDataset":
        """Dataset with node ``k`` renamed ``perm[k]`` (0-based permutation)."""
        perm = np.asarray(perm)
        n = self.n
        s, r = dyad_arrays(n)
        new_idx = _index0(perm[s], perm[r], n)
        order = np.empty_like(new_idx)
        order[new_idx] = np.arange(new_idx.size)
        ids = [None] * n
        for k in range(n):
            ids[perm[k]] = self.node_ids[k]
        return RelationalDataset(
            n,
            self.y[order],
            self.X[order],
            None if self.offsets is None else self.offsets[order],
            self.names,
            tuple(ids),
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        s, r = dyad_arrays(self.n)
        return {
            "n": self.n,
            "node_ids": list(self.node_ids),
            "dyads": [[self.node_ids[a], self.node_ids[b]] for a, b in zip(s, r)],
            "y": [int(v) for v in self.y],
            "offsets": None if self.offsets is None else [float(v) for v in self.offsets],
            "covariate_names": list(self.names),
            "X": [[float(v) for v in row] for row in self.X],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RelationalDataset":
        n = int(doc["n"])
        node_ids = [str(v) for v in doc["node_ids"]]
        pos = {v: k for k, v in enumerate(node_ids)}
        N = n * n - n
        y = np.zeros(N)
        X = np.asarray(doc["X"], dtype=float)
        Xo = np.zeros_like(X)
        offs = doc.get("offsets")
        off = None if offs is None else np.zeros(N)
        seen = np.zeros(N, dtype=bool)
        for row, (a, b) in enumerate(doc["dyads"]):
            k = edge_index(pos[str(a)] + 1, pos[str(b)] + 1, n)
            if seen[k]:
                raise DataError(f"duplicate dyad ({a}, {b})")
            seen[k] = True
            y[k] = doc["y"][row]
            Xo[k] = X[row]
            if off is not None:
                off[k] = offs[row]
        if not seen.all():
            raise DataError("dataset document is missing dyads")
        return cls(n, y, Xo, off, tuple(doc["covariate_names"]), tuple(node_ids))

    def to_json(self, path: str | os.PathLike | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            _atomic_write(path, text)
        return text

    @classmethod
    def from_json(cls, source: str | os.PathLike) -> "RelationalDataset":
        source = Path(source)
        return cls.from_dict(json.loads(source.read_text(encoding="utf-8")))


def _index0(s, r, n):
    return s * (n - 1) + np.where(r < s, r, r - 1)


# ---------------------------------------------------------------------------
# Covariate specification and design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    kind: str
    var: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise SchemaError(f"unknown term kind {self.kind!r}; expected one of {TERM_KINDS}")
        if self.kind == "intercept":
            if self.var is not None:
                raise SchemaError("intercept takes no variable")
        elif not self.var:
            raise SchemaError(f"term {self.kind!r} requires a variable name")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return "intercept" if self.kind == "intercept" else f"{self.kind}({self.var})"

    def to_dict(self) -> dict:
        d = {"type": self.kind}
        if self.var is not None:
            d["var"] = self.var
        if self.name:
            d["name"] = self.name
        return d


@dataclass(frozen=True)
class DyadicCovariateSpec:
    """Ordered list of design terms; term order is coefficient order."""

    terms: tuple[Term, ...]
    link: str = "exp"
    offset: str | None = None

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(**t) for t in self.terms)
        if not terms:
            raise SchemaError("model spec has no terms")
        object.__setattr__(self, "terms", terms)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.terms)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DyadicCovariateSpec":
        try:
            raw = doc["terms"]
        except KeyError:
            raise SchemaError("model spec needs a 'terms' list") from None
        terms = []
        for t in raw:
            if isinstance(t, str):
                terms.append(Term("intercept") if t == "intercept" else _parse_term(t))
                continue
            t = dict(t)
            kind = t.pop("type", t.pop("kind", None))
            if kind is None:
                raise SchemaError(f"term {t} lacks a 'type'")
            terms.append(Term(kind, t.get("var"), t.get("name")))
        return cls(tuple(terms), str(doc.get("link", "exp")), doc.get("offset"))

    def to_dict(self) -> dict:
        return {
            "terms": [t.to_dict() for t in self.terms],
            "link": self.link,
            "offset": self.offset,
        }


def _parse_term(text: str) -> Term:
    # "sender(game)" style shorthand
    text = text.strip()
    if "(" not in text or not text.endswith(")"):
        raise SchemaError(f"cannot parse term {text!r}")
    kind, var = text[:-1].split("(", 1)
    return Term(kind.strip(), var.strip())


def load_model_spec(path: str | os.PathLike) -> DyadicCovariateSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"model spec {path} is not valid JSON: {exc}") from None
    return DyadicCovariateSpec.from_dict(doc)


def build_design(
    node_table: Mapping[str, Sequence[float]] | None,
    edge_table: Mapping[str, Sequence[float]] | None,
    spec: DyadicCovariateSpec | Sequence[Term],
    n: int | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Assemble the ``(n*n - n) x p`` design matrix.

    ``node_table`` maps variable names to length-``n`` arrays indexed by
    internal node; ``edge_table`` maps names to per-dyad arrays in edge order.
    """
    terms = spec.terms if isinstance(spec, DyadicCovariateSpec) else tuple(spec)
    node_table = {k: np.asarray(v, dtype=float) for k, v in (node_table or {}).items()}
    edge_table = {k: np.asarray(v, dtype=float) for k, v in (edge_table or {}).items()}
    if n is None:
        if node_table:
            n = len(next(iter(node_table.values())))
        elif edge_table:
            N = len(next(iter(edge_table.values())))
            n = int(round((1 + math.sqrt(1 + 4 * N)) / 2))
        else:
            raise SchemaError("cannot infer n without node or edge tables")
    N = n * n - n
    s, r = dyad_arrays(n)
    cols = []
    for t in terms:
        if t.kind == "intercept":
            col = np.ones(N)
        elif t.kind in _NODE_TERMS:
            if t.var not in node_table:
                raise SchemaError(f"node variable {t.var!r} not found")
            v = node_table[t.var]
            if v.shape != (n,):
                raise DataError(f"node variable {t.var!r} has {v.size} values, expected {n}")
            if t.kind == "sender":
                col = v[s]
            elif t.kind == "receiver":
                col = v[r]
            elif t.kind == "product":
                col = v[s] * v[r]
            else:
                col = np.abs(v[s] - v[r])
        else:
            if t.var not in edge_table:
                raise SchemaError(f"edge variable {t.var!r} not found")
            v = edge_table[t.var]
            if v.shape != (N,):
                raise DataError(f"edge variable {t.var!r} has {v.size} values, expected {N}")
            if t.kind == "edge":
                col = v
            else:
                if np.any(v <= 0):
                    raise DataError(f"log-edge({t.var}) requires positive values")
                col = np.log(v)
        if not np.all(np.isfinite(col)):
            raise DataError(f"term {t.label} has non-finite values")
        cols.append(col)
    return np.column_stack(cols), tuple(t.label for t in terms)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass
class EdgeTable:
    """Parsed edge-list CSV: counts, offsets and extra per-dyad columns."""

    node_ids: tuple[str, ...]
    y: np.ndarray
    offsets: np.ndarray | None
    variables: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.node_ids)


@dataclass
class NodeTable:
    node_ids: tuple[str, ...]
    variables: dict[str, np.ndarray] = field(default_factory=dict)


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def _sort_ids(ids: Iterable[str]) -> tuple[str, ...]:
    ids = list(ids)
    try:
        return tuple(sorted(ids, key=lambda v: (int(v), v)))
    except ValueError:
        return tuple(sorted(ids))


def _float(text: str, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{what}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"{what}: non-finite value {text!r}")
    return v


def load_node_table(source) -> NodeTable:
    """Read ``node,<var1>,<var2>,...`` CSV."""
    fh, close = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[0].strip() != "node":
            raise SchemaError("node table header must start with 'node'")
        names = [c.strip() for c in reader.fieldnames[1:]]
        rows = {}
        for line, row in enumerate(reader, start=2):
            nid = row[reader.fieldnames[0]].strip()
            if nid in rows:
                raise DataError(f"line {line}: duplicate node {nid!r}")
            rows[nid] = [_float(row[c], f"line {line}, column {c}") for c in reader.fieldnames[1:]]
    finally:
        if close:
            fh.close()
    ids = _sort_ids(rows)
    variables = {name: np.array([rows[i][k] for i in ids]) for k, name in enumerate(names)}
    return NodeTable(ids, variables)


def load_edgelist(source, *, node_ids: Sequence[str] | None = None, zero_fill: bool = False) -> EdgeTable:
    """Read ``sender,receiver,count[,offset][,<edge vars>...]`` CSV.

    Every dyad must be present unless ``zero_fill`` is set, in which case
    absent dyads get count 0, offset 0 and edge variables 0.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("edge list is empty") from None
        if header[:3] != ["sender", "receiver", "count"]:
            raise SchemaError("edge list header must start with 'sender,receiver,count'")
        has_offset = len(header) > 3 and header[3] == "offset"
        extra = header[4:] if has_offset else header[3:]
        records = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            a, b = row[0].strip(), row[1].strip()
            if a == b:
                raise DataError(f"line {line}: self-loop on node {a!r}")
            cnt = _float(row[2], f"line {line}, count")
            if cnt < 0:
                raise DataError(f"line {line}: negative count {row[2]!r}")
            if cnt != round(cnt):
                raise DataError(f"line {line}: non-integer count {row[2]!r}")
            off = _float(row[3], f"line {line}, offset") if has_offset else 0.0
            start = 4 if has_offset else 3
            ev = [_float(row[start + k], f"line {line}, column {c}") for k, c in enumerate(extra)]
            records.append((line, a, b, cnt, off, ev))
    finally:
        if close:
            fh.close()

    if node_ids is None:
        ids = _sort_ids({r[1] for r in records} | {r[2] for r in records})
    else:
        ids = tuple(str(v) for v in node_ids)
    pos = {v: k for k, v in enumerate(ids)}
    n = len(ids)
    if n < 3:
        raise DataError(f"need at least 3 nodes, got {n}")
    N = n * n - n
    y = np.zeros(N)
    off = np.zeros(N)
    ev = np.zeros((N, len(extra)))
    seen = np.zeros(N, dtype=bool)
    for line, a, b, cnt, o, e in records:
        if a not in pos or b not in pos:
            raise DataError(f"line {line}: node {a if a not in pos else b!r} not in node table")
        k = edge_index(pos[a] + 1, pos[b] + 1, n)
        if seen[k]:
            raise DataError(f"line {line}: duplicate dyad ({a}, {b})")
        seen[k] = True
        y[k], off[k], ev[k] = cnt, o, e
    if not zero_fill and not seen.all():
        missing = [dyad_from_index(k, n) for k in np.flatnonzero(~seen)[:5]]
        shown = ", ".join(f"({ids[i - 1]}, {ids[j - 1]})" for i, j in missing)
        raise DataError(
            f"{int((~seen).sum())} dyads missing (e.g. {shown}); pass zero_fill to treat them as 0"
        )
    return EdgeTable(
        ids,
        y,
        off if has_offset else None,
        {name: ev[:, k].copy() for k, name in enumerate(extra)},
    )


def load_dataset(
    edges,
    spec: DyadicCovariateSpec,
    nodes=None,
    *,
    zero_fill: bool = False,
) -> RelationalDataset:
    """Read an edge list (and optional node table) and build the design."""
    node_tab = load_node_table(nodes) if nodes is not None else None
    edge_tab = load_edgelist(
        edges, node_ids=None if node_tab is None else node_tab.node_ids, zero_fill=zero_fill
    )
    X, names = build_design(
        None if node_tab is None else node_tab.variables, edge_tab.variables, spec, n=edge_tab.n
    )
    offsets = None
    if spec.offset:
        if spec.offset == "offset":
            if edge_tab.offsets is None:
                raise SchemaError("model spec names an offset but the edge list has no offset column")
            offsets = edge_tab.offsets
        elif spec.offset in edge_tab.variables:
            offsets = edge_tab.variables[spec.offset]
        else:
            raise SchemaError(f"offset column {spec.offset!r} not found")
    return RelationalDataset(edge_tab.n, edge_tab.y, X, offsets, names, edge_tab.node_ids)


def write_edgelist(
    target,
    n: int,
    y,
    *,
    offsets=None,
    variables: Mapping[str, Sequence[float]] | None = None,
    node_ids: Sequence[str] | None = None,
) -> None:
    variables = dict(variables or {})
    ids = list(node_ids) if node_ids is not None else [str(k + 1) for k in range(n)]
    s, r = dyad_arrays(n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["sender", "receiver", "count"] + (["offset"] if offsets is not None else [])
    w.writerow(header + list(variables))
    for k in range(n * n - n):
        row = [ids[s[k]], ids[r[k]], int(y[k])]
        if offsets is not None:
            row.append(repr(float(offsets[k])))
        row.extend(repr(float(variables[v][k])) for v in variables)
        w.writerow(row)
    _write_target(target, buf.getvalue())


def write_node_table(target, variables: Mapping[str, Sequence[float]], node_ids: Sequence[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node"] + list(variables))
    for k, nid in enumerate(node_ids):
        w.writerow([nid] + [repr(float(variables[v][k])) for v in variables])
    _write_target(target, buf.getvalue())


def _write_target(target, text: str) -> None:
    if isinstance(target, (str, os.PathLike)):
        _atomic_write(target, text)
    else:
        target.write(text)


def _atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
