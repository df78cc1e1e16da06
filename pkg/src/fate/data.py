"""Dataset ingestion, encoding, stratified folds and synthetic fixtures.

A :class:`Dataset` is the encoded form every other module consumes: a numeric
feature matrix, binary labels ``y`` (1 = favorable), a binary protected
indicator ``a`` (1 = privileged) and positive instance weights ``w``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    InvalidFoldError,
    ParseError,
    SchemaError,
)

NA_POLICIES = (None, "drop_row", "impute_mode_mean")
DEFAULT_NA_VALUES = ("", "?", "NA", "N/A", "NaN", "nan")


@dataclass(frozen=True)
class DatasetSchema:
    """Binds raw CSV columns to the roles the rest of the package needs."""

    target_column: str
    favorable_label: str
    protected_column: str
    privileged_value: str
    feature_columns: tuple  # ((name, "numeric" | "categorical"), ...)
    na_policy: Optional[str] = None
    na_values: tuple = DEFAULT_NA_VALUES
    weight_column: Optional[str] = None

    def __post_init__(self):
        cols = tuple((str(n), str(k)) for n, k in self.feature_columns)
        object.__setattr__(self, "feature_columns", cols)
        object.__setattr__(self, "favorable_label", str(self.favorable_label))
        object.__setattr__(self, "privileged_value", str(self.privileged_value))
        object.__setattr__(self, "na_values", tuple(self.na_values))
        if self.target_column == self.protected_column:
            raise SchemaError("target and protected columns must differ")
        names = [n for n, _ in cols]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature column")
        for reserved in (self.target_column, self.protected_column, self.weight_column):
            if reserved is not None and reserved in names:
                raise SchemaError(f"column {reserved!r} cannot also be a feature")
        for name, kind in cols:
            if kind not in ("numeric", "categorical"):
                raise SchemaError(f"feature {name!r}: unknown kind {kind!r}")
        if self.na_policy not in NA_POLICIES:
            raise SchemaError(f"unknown na_policy {self.na_policy!r}")

    def to_dict(self) -> dict:
        return {
            "target_column": self.target_column,
            "favorable_label": self.favorable_label,
            "protected_column": self.protected_column,
            "privileged_value": self.privileged_value,
            "feature_columns": [[n, k] for n, k in self.feature_columns],
            "na_policy": self.na_policy,
            "na_values": list(self.na_values),
            "weight_column": self.weight_column,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            feats = d["feature_columns"]
            if isinstance(feats, dict):
                feats = list(feats.items())
            return cls(
                target_column=d["target_column"],
                favorable_label=d["favorable_label"],
                protected_column=d["protected_column"],
                privileged_value=d["privileged_value"],
                feature_columns=tuple(tuple(f) for f in feats),
                na_policy=d.get("na_policy"),
                na_values=tuple(d.get("na_values", DEFAULT_NA_VALUES)),
                weight_column=d.get("weight_column"),
            )
        except KeyError as exc:
            raise SchemaError(f"schema missing field {exc.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded tabular data.

    ``feature_sources[j]`` is the categorical column a one-hot feature was
    expanded from, or ``None`` for a numeric feature.
    """

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    w: np.ndarray = None
    feature_names: tuple = None
    feature_sources: tuple = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ValueError("x must be 2-D")
        n, d = x.shape
        y = np.array(self.y, dtype=np.int64).ravel()
        a = np.array(self.a, dtype=np.int64).ravel()
        w = np.ones(n) if self.w is None else np.array(self.w, dtype=float).ravel()
        if n < 1:
            raise EmptyDatasetError("dataset has no rows")
        if not (len(y) == len(a) == len(w) == n):
            raise ValueError(f"row count mismatch: x={n} y={len(y)} a={len(a)} w={len(w)}")
        if not np.isin(y, (0, 1)).all() or not np.isin(a, (0, 1)).all():
            raise ValueError("y and a must be binary 0/1")
        if not (w > 0).all():
            raise ValueError("instance weights must be positive")
        names = self.feature_names
        names = tuple(f"x{j}" for j in range(d)) if names is None else tuple(names)
        sources = (None,) * d if self.feature_sources is None else tuple(self.feature_sources)
        if len(names) != d or len(sources) != d:
            raise ValueError("feature metadata length does not match x")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_sources", sources)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def numeric_mask(self) -> np.ndarray:
        return np.array([s is None for s in self.feature_sources], dtype=bool)

    def onehot_groups(self) -> list:
        """Column-index lists, one per expanded categorical column."""
        groups: dict = {}
        for j, src in enumerate(self.feature_sources):
            if src is not None:
                groups.setdefault(src, []).append(j)
        return list(groups.values())

    def cell_index(self) -> np.ndarray:
        """Joint (y, a) cell id per row: 2*y + a."""
        return 2 * self.y + self.a

    def cell_counts(self) -> dict:
        c = np.bincount(self.cell_index(), minlength=4)
        return {(yy, aa): int(c[2 * yy + aa]) for yy in (0, 1) for aa in (0, 1)}

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.a[idx], self.w[idx],
                       self.feature_names, self.feature_sources)

    def replace(self, **changes) -> "Dataset":
        return dataclasses.replace(self, **changes)


def _is_na(raw: str, schema: DatasetSchema) -> bool:
    return raw is None or raw.strip() in schema.na_values


def _matches(raw: str, wanted: str) -> bool:
    raw = raw.strip()
    if raw == wanted:
        return True
    try:
        return float(raw) == float(wanted)
    except ValueError:
        return False


def _to_float(raw: str) -> Optional[float]:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Read a header-row CSV and encode it according to ``schema``.

    Numeric features keep schema order; categorical features are one-hot
    encoded and appended after them, schema order then lexicographic category
    order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)

    needed = [schema.target_column, schema.protected_column]
    needed += [n for n, _ in schema.feature_columns]
    if schema.weight_column:
        needed.append(schema.weight_column)
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")

    numeric = [n for n, k in schema.feature_columns if k == "numeric"]
    categorical = [n for n, k in schema.feature_columns if k == "categorical"]
    policy = schema.na_policy

    fill: dict = {}
    if policy == "impute_mode_mean":
        # statistics over the whole file, before any split
        for col in numeric:
            vals = [v for v in (_to_float(r[col]) for r in rows if not _is_na(r[col], schema))
                    if v is not None]
            fill[col] = float(np.mean(vals)) if vals else 0.0
        for col in categorical:
            counts = Counter(r[col].strip() for r in rows if not _is_na(r[col], schema))
            if counts:
                top = max(counts.values())
                fill[col] = min(v for v, c in counts.items() if c == top)

    ys, as_, ws, nums, cats = [], [], [], [], []
    for lineno, r in enumerate(rows, start=2):
        bad = None
        if _is_na(r[schema.target_column], schema):
            bad = f"missing target in line {lineno}"
        elif _is_na(r[schema.protected_column], schema):
            bad = f"missing protected attribute in line {lineno}"
        num_row = []
        if bad is None:
            for col in numeric:
                raw = r[col]
                v = None if _is_na(raw, schema) else _to_float(raw)
                if v is None:
                    if policy == "impute_mode_mean":
                        v = fill[col]
                    else:
                        bad = f"non-numeric value {raw!r} in column {col!r}, line {lineno}"
                        break
                num_row.append(v)
        cat_row = []
        if bad is None:
            for col in categorical:
                raw = r[col]
                if _is_na(raw, schema):
                    if policy == "impute_mode_mean" and col in fill:
                        cat_row.append(fill[col])
                        continue
                    bad = f"missing value in column {col!r}, line {lineno}"
                    break
                cat_row.append(raw.strip())
        wt = 1.0
        if bad is None and schema.weight_column:
            wt = _to_float(r[schema.weight_column])
            if wt is None or wt <= 0:
                bad = f"invalid weight in line {lineno}"
        if bad is not None:
            if policy is None:
                raise ParseError(f"{path}: {bad}")
            continue
        ys.append(1 if _matches(r[schema.target_column], schema.favorable_label) else 0)
        as_.append(1 if _matches(r[schema.protected_column], schema.privileged_value) else 0)
        ws.append(wt)
        nums.append(num_row)
        cats.append(cat_row)

    if not ys:
        raise EmptyDatasetError(f"{path}: no usable rows")

    n = len(ys)
    blocks = [np.asarray(nums, dtype=float).reshape(n, len(numeric))]
    names = list(numeric)
    sources: list = [None] * len(numeric)
    for j, col in enumerate(categorical):
        values = [row[j] for row in cats]
        levels = sorted(set(values))
        onehot = np.zeros((n, len(levels)))
        pos = {lv: i for i, lv in enumerate(levels)}
        onehot[np.arange(n), [pos[v] for v in values]] = 1.0
        blocks.append(onehot)
        names += [f"{col}={lv}" for lv in levels]
        sources += [col] * len(levels)
    x = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return Dataset(x, ys, as_, ws, tuple(names), tuple(sources))


def write_csv(ds: Dataset, path, label_column="label", protected_column="protected",
              weights=False) -> DatasetSchema:
    """Write ``ds`` as CSV and return the schema that reloads it.

    Floats are written with ``repr`` so a reload reproduces them bit for bit.
    """
    names = list(ds.feature_names)
    while label_column in names:
        label_column += "_"
    while protected_column in names or protected_column == label_column:
        protected_column += "_"
    weight_column = None
    if weights:
        weight_column = "weight"
        while weight_column in names or weight_column in (label_column, protected_column):
            weight_column += "_"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(names + [label_column, protected_column]
                     + ([weight_column] if weight_column else []))
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.x[i]] + [int(ds.y[i]), int(ds.a[i])]
            if weight_column:
                row.append(repr(float(ds.w[i])))
            out.writerow(row)
    return DatasetSchema(
        target_column=label_column,
        favorable_label="1",
        protected_column=protected_column,
        privileged_value="1",
        feature_columns=tuple((nm, "numeric") for nm in names),
        weight_column=weight_column,
    )


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.assignments, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= self.k):
            raise InvalidFoldError("fold index out of range")
        object.__setattr__(self, "assignments", _readonly(arr))

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self):
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "assignments": self.assignments.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        d = json.loads(text)
        return cls(int(d["k"]), d["assignments"])

    def __eq__(self, other):
        return (isinstance(other, FoldPlan) and self.k == other.k
                and np.array_equal(self.assignments, other.assignments))

    __hash__ = None


def stratified_kfold(ds: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Assign rows to ``k`` folds, stratified on the joint (y, a) cell.

    Each cell is shuffled and dealt round-robin; the dealing position carries
    over from one cell to the next so overall fold sizes also differ by at
    most one.
    """
    if k < 2:
        raise InvalidFoldError(f"k must be >= 2, got {k}")
    if k > ds.n:
        raise InvalidFoldError(f"k={k} exceeds row count {ds.n}")
    rng = np.random.default_rng(seed)
    cells = ds.cell_index()
    assign = np.empty(ds.n, dtype=np.int64)
    offset = 0
    for c in range(4):
        idx = np.flatnonzero(cells == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        assign[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldPlan(k, assign)


def synthetic_biased(n: int, label_bias: float, seed: int = 0) -> Dataset:
    """Two-feature dataset whose labels favor the privileged group.

    Label SPD is ``-label_bias`` up to count rounding. ``x1`` tracks the label;
    ``x2`` tracks both the label and group membership, so a model trained on
    it inherits the label bias through a proxy.
    """
    if n < 20:
        raise ValueError("synthetic_biased needs n >= 20")
    if not 0.0 <= label_bias <= 1.0:
        raise ValueError("label_bias must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    a = rng.permutation(np.r_[np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    y = np.zeros(n, np.int64)
    for group, size, rate in ((0, n0, 0.5 - label_bias / 2), (1, n1, 0.5 + label_bias / 2)):
        idx = np.flatnonzero(a == group)
        pos = int(round(size * rate))
        y[rng.choice(idx, size=pos, replace=False)] = 1
    x1 = y + rng.normal(0.0, 1.0, n)
    x2 = a + 0.5 * y + rng.normal(0.0, 1.0, n)
    return Dataset(np.column_stack([x1, x2]), y, a, None, ("x1", "x2"), (None, None))


def label_spd(ds: Dataset) -> float:
    """P(Y=1 | A=0) - P(Y=1 | A=1) of the dataset's own labels."""
    return float(ds.y[ds.a == 0].mean() - ds.y[ds.a == 1].mean())


def concat(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(
        np.vstack([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.a for p in parts]),
        np.concatenate([p.w for p in parts]),
        first.feature_names,
        first.feature_sources,
    )


def load_source(spec: dict, base_dir: Path = Path(".")) -> tuple:
    """Resolve a config ``dataset`` entry into ``(name, Dataset)``.

    Accepts ``{"path": ..., "schema": <path or inline dict>}`` or
    ``{"synthetic": {"n": ..., "label_bias": ..., "seed": ...}}``.
    """
    if "synthetic" in spec:
        s = spec["synthetic"]
        ds = synthetic_biased(int(s.get("n", 1000)), float(s.get("label_bias", 0.3)),
                              int(s.get("seed", 0)))
        return spec.get("name", "synthetic"), ds
    if "path" not in spec or "schema" not in spec:
        raise SchemaError("dataset entry needs 'path' and 'schema' (or 'synthetic')")
    path = (base_dir / spec["path"]).resolve()
    schema = spec["schema"]
    if isinstance(schema, str):
        schema = DatasetSchema.load(_schema_path(schema, base_dir))
    else:
        schema = DatasetSchema.from_dict(schema)
    return spec.get("name", path.stem), load_csv(path, schema)


def _schema_path(ref: str, base_dir: Path) -> Path:
    p = base_dir / ref
    if p.exists():
        return p
    bundled = Path(__file__).parent / "schemas" / f"{ref}.json"
    if bundled.exists():
        return bundled
    raise SchemaError(f"schema {ref!r} not found")
