"""Cohorts: encoded feature matrix, binary risk labels and student ids."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IngestionError, SchemaError
from .schema import NETWORK_FEATURES, FeatureSchema, derive_label

logger = logging.getLogger(__name__)

ID_COLUMNS = ("student_id", "id")
GPA_COLUMN = "GPA"
LABEL_COLUMN = "risk"
MAX_REJECTED_FRACTION = 0.5


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable cohort aligned to the schema's unpruned specs.

    ``X`` has one column per active spec.  Network-centrality columns may be
    NaN until :func:`acadrisk.network.attach_centrality_features` fills them.
    """

    schema: FeatureSchema
    ids: tuple
    X: np.ndarray
    y: np.ndarray
    cohort_tag: str = ""
    rejected_count: int = 0

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        ids = tuple(str(i) for i in self.ids)
        active = self.schema.active
        if X.ndim != 2 or X.shape[1] != len(active):
            raise SchemaError(f"feature matrix has shape {X.shape}, expected (n, {len(active)})")
        if X.shape[0] != len(ids) or y.shape != (len(ids),):
            raise SchemaError("ids, features and labels differ in length")
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate student ids")
        if not np.isin(y, (0, 1)).all():
            raise DomainError("labels must be 0 or 1")
        for j, spec in enumerate(active):
            col = X[:, j]
            known = col[~np.isnan(col)] if spec.name in NETWORK_FEATURES else col
            if not all(spec.is_valid(v) for v in known):
                raise DomainError(f"column {spec.name} holds invalid encoded values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (self.schema == other.schema and self.ids == other.ids
                and self.cohort_tag == other.cohort_tag
                and np.array_equal(self.X, other.X, equal_nan=True)
                and np.array_equal(self.y, other.y))

    @property
    def feature_names(self) -> list:
        return self.schema.active_names

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}; valid names: {self.feature_names}") from None

    def index_of(self, student_id) -> int:
        try:
            return self.ids.index(str(student_id))
        except ValueError:
            raise KeyError(f"student {student_id!r} not in cohort") from None

    @property
    def is_complete(self) -> bool:
        return bool(np.isfinite(self.X).all())

    def subset(self, rows) -> "Cohort":
        rows = np.asarray(rows, dtype=np.int64)
        return Cohort(self.schema, [self.ids[i] for i in rows], self.X[rows], self.y[rows],
                      self.cohort_tag)

    def with_columns(self, values: dict) -> "Cohort":
        X = self.X.copy()
        for name, col in values.items():
            X[:, self.feature_names.index(name)] = col
        return Cohort(self.schema, self.ids, X, self.y, self.cohort_tag, self.rejected_count)

    def without(self, names) -> "Cohort":
        """Cohort over a schema with ``names`` additionally pruned (drop-and-retrain)."""
        schema = self.schema.with_pruned(names)
        keep = [self.feature_names.index(n) for n in schema.active_names]
        return Cohort(schema, self.ids, self.X[:, keep], self.y, self.cohort_tag,
                      self.rejected_count)

    def to_dict(self) -> dict:
        return {
            "cohort_tag": self.cohort_tag,
            "schema": self.schema.to_dict(),
            "schema_hash": self.schema.fingerprint(),
            "feature_names": self.feature_names,
            "rows": [
                {"student_id": sid, "label": int(lab),
                 "features": [None if math.isnan(v) else float(v) for v in row]}
                for sid, row, lab in zip(self.ids, self.X.tolist(), self.y.tolist())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Cohort":
        schema = FeatureSchema.from_dict(d["schema"])
        if d.get("schema_hash") and d["schema_hash"] != schema.fingerprint():
            raise SchemaError("schema hash does not match embedded schema")
        rows = d["rows"]
        X = np.array([[math.nan if v is None else v for v in r["features"]] for r in rows],
                     dtype=np.float64).reshape(len(rows), len(schema.active))
        return cls(schema, [r["student_id"] for r in rows], X,
                   [r["label"] for r in rows], d.get("cohort_tag", ""))

    @classmethod
    def from_json(cls, text: str) -> "Cohort":
        return cls.from_dict(json.loads(text))


def save_cohort(cohort: Cohort, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cohort.to_json())


def load_cohort(path) -> Cohort:
    with open(path, encoding="utf-8") as fh:
        return Cohort.from_json(fh.read())


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data


def ingest_csv(source, schema: FeatureSchema, cohort_tag: str = "") -> Cohort:
    """Read a fused cohort CSV.

    Columns may come in any order.  Pruned columns are ignored if present.
    Exactly one of ``GPA`` or ``risk`` must supply the target.  Rows with a
    bad cell are rejected and counted; more than half rejected is fatal.
    Network-centrality columns may be absent, in which case they are left
    NaN for a later featurize step.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise IngestionError("empty CSV")
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    pos = {name: i for i, name in enumerate(header)}

    id_col = next((c for c in ID_COLUMNS if c in pos), None)
    if id_col is None:
        raise SchemaError(f"missing id column (one of {ID_COLUMNS})")
    has_gpa, has_label = GPA_COLUMN in pos, LABEL_COLUMN in pos
    if has_gpa == has_label:
        raise SchemaError(f"exactly one of {GPA_COLUMN!r} or {LABEL_COLUMN!r} columns is required")

    active = schema.active
    missing = [s.name for s in active if s.name not in pos and s.name not in NETWORK_FEATURES]
    if missing:
        raise SchemaError(f"missing mandatory columns: {missing}")
    known = set(schema.names) | {id_col, GPA_COLUMN, LABEL_COLUMN}
    extra = [h for h in header if h not in known]
    if extra:
        logger.warning("ignoring unknown columns %s", extra)

    ids, rows, labels = [], [], []
    seen = set()
    rejected = total = 0
    for lineno, record in enumerate(reader, start=2):
        if not record or not any(cell.strip() for cell in record):
            continue
        total += 1
        try:
            if len(record) != len(header):
                raise IngestionError("wrong number of fields", row=lineno)
            values = []
            for spec in active:
                if spec.name not in pos:
                    values.append(math.nan)
                    continue
                try:
                    values.append(spec.encode(record[pos[spec.name]]))
                except IngestionError as exc:
                    raise IngestionError(exc.reason, row=lineno, column=spec.name) from None
            if has_gpa:
                try:
                    gpa = float(record[pos[GPA_COLUMN]])
                except ValueError:
                    raise IngestionError("unparseable GPA", row=lineno, column=GPA_COLUMN) from None
                label = derive_label(gpa, row=lineno)
            else:
                cell = record[pos[LABEL_COLUMN]].strip()
                if cell not in ("0", "1"):
                    raise IngestionError(f"label {cell!r} not 0/1", row=lineno, column=LABEL_COLUMN)
                label = int(cell)
            sid = record[pos[id_col]].strip()
            if not sid or sid in seen:
                raise IngestionError("missing or duplicate id", row=lineno, column=id_col)
        except (IngestionError, DomainError) as exc:
            rejected += 1
            logger.info("rejected: %s", exc)
            continue
        seen.add(sid)
        ids.append(sid)
        rows.append(values)
        labels.append(label)

    if total == 0:
        raise IngestionError("CSV has a header but no data rows")
    if rejected > MAX_REJECTED_FRACTION * total:
        raise IngestionError(f"{rejected} of {total} rows rejected; schema drift suspected")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(active))
    return Cohort(schema, ids, X, labels, cohort_tag, rejected)


def write_csv(cohort: Cohort, fh, gpa=None) -> None:
    """Write ``cohort`` in the format :func:`ingest_csv` reads back unchanged.

    Categorical cells are written as labels, numerics with ``repr`` so floats
    round-trip exactly.  NaN network columns are omitted.
    """
    specs = [s for j, s in enumerate(cohort.schema.active)
             if not np.isnan(cohort.X[:, j]).any()]
    idx = [cohort.feature_names.index(s.name) for s in specs]
    writer = csv.writer(fh, lineterminator="\n")
    target = GPA_COLUMN if gpa is not None else LABEL_COLUMN
    writer.writerow(["student_id", *[s.name for s in specs], target])
    for r, sid in enumerate(cohort.ids):
        cells = [s.decode(cohort.X[r, j]) for s, j in zip(specs, idx)]
        last = repr(float(gpa[r])) if gpa is not None else str(int(cohort.y[r]))
        writer.writerow([sid, *cells, last])


def class_balance(cohort) -> tuple:
    """Return ``(p0, p1)``, the class proportions of a cohort or label vector."""
    y = np.asarray(cohort.y if isinstance(cohort, Cohort) else cohort)
    if y.size == 0:
        raise DomainError("class balance of an empty cohort")
    p1 = float(y.mean())
    return 1.0 - p1, p1
