"""Tabular data handling: CSV ingestion, z-scoring, stratified splits and a
grouped latent-factor generator used for desk-scale experiments."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or tables that violate a contract."""


@dataclass(frozen=True)
class FeatureTable:
    feature_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        names = tuple(self.feature_names)
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {r}, column {names[c]!r}")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (values.shape[0],):
                raise DataError(
                    f"labels length {labels.shape} does not match {values.shape[0]} rows")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0 or 1")
            labels = labels.astype(int)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column_index(self, names: Sequence[str]) -> list[int]:
        lookup = {name: i for i, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in lookup]
        if missing:
            raise DataError(f"missing required feature(s): {', '.join(missing)}")
        return [lookup[name] for name in names]

    def select_features(self, names: Sequence[str]) -> "FeatureTable":
        idx = self.column_index(names)
        return FeatureTable(tuple(names), self.values[:, idx], self.labels)

    def take_rows(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=int)
        labels = None if self.labels is None else self.labels[rows]
        return FeatureTable(self.feature_names, self.values[rows], labels)


@dataclass(frozen=True)
class GroupMap:
    groups: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        groups = tuple((str(name), tuple(members)) for name, members in self.groups)
        object.__setattr__(self, "groups", groups)
        names = [name for name, _ in groups]
        if len(set(names)) != len(names):
            raise DataError("duplicate group name")
        seen: dict[str, str] = {}
        for name, members in groups:
            if not members:
                raise DataError(f"group {name!r} is empty")
            for feat in members:
                if feat in seen:
                    raise DataError(
                        f"feature {feat!r} appears in groups {seen[feat]!r} and {name!r}")
                seen[feat] = name

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.groups]

    def group_of(self) -> dict[str, str]:
        return {feat: name for name, members in self.groups for feat in members}

    def validate_against(self, feature_names: Sequence[str]) -> None:
        """Check that the groups partition ``feature_names`` exactly."""
        member_set = set(self.group_of())
        table_set = set(feature_names)
        unknown = sorted(member_set - table_set)
        if unknown:
            raise DataError(f"group map references unknown feature(s): {', '.join(unknown)}")
        omitted = [f for f in feature_names if f not in member_set]
        if omitted:
            raise DataError(f"group map omits feature(s): {', '.join(omitted)}")

    def restricted_to(self, feature_names: Sequence[str]) -> "GroupMap":
        """Drop features not in ``feature_names`` (and groups left empty)."""
        keep = set(feature_names)
        groups = []
        for name, members in self.groups:
            kept = tuple(f for f in members if f in keep)
            if kept:
                groups.append((name, kept))
        return GroupMap(tuple(groups))


@dataclass(frozen=True)
class StandardizationParams:
    feature_names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    dropped_features: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "sds", np.asarray(self.sds, dtype=float))
        object.__setattr__(self, "dropped_features", tuple(self.dropped_features))
        if np.any(self.sds <= 0):
            raise DataError("standard deviations must be positive")
        if set(self.feature_names) & set(self.dropped_features):
            raise DataError("a feature cannot be both retained and dropped")


@dataclass(frozen=True)
class GroupSpec:
    name: str
    n_features: int
    n_informative: int
    factor_loading: float
    feature_noise_sd: float


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    group_specs: tuple[GroupSpec, ...]
    label_coefficients: tuple[float, ...]
    label_intercept: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_specs", tuple(self.group_specs))
        object.__setattr__(self, "label_coefficients", tuple(float(c) for c in self.label_coefficients))
        if self.n_samples < 1:
            raise DataError("n_samples must be positive")
        if len(self.label_coefficients) != len(self.group_specs):
            raise DataError("need one label coefficient per group")
        if self.seed < 0:
            raise DataError("seed must be non-negative")
        for g in self.group_specs:
            if g.n_features < 1 or not 0 <= g.n_informative <= g.n_features:
                raise DataError(f"group {g.name!r}: need 0 <= n_informative <= n_features, n_features >= 1")
            if g.feature_noise_sd < 0:
                raise DataError(f"group {g.name!r}: feature_noise_sd must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        try:
            groups = tuple(GroupSpec(**g) for g in doc["group_specs"])
            return cls(
                n_samples=int(doc["n_samples"]),
                group_specs=groups,
                label_coefficients=tuple(doc["label_coefficients"]),
                label_intercept=float(doc.get("label_intercept", 0.0)),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid synthetic spec: {exc}") from None


# ---------------------------------------------------------------- ingestion

def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell at row {row}, column {col}: {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell at row {row}, column {col}")
    return value


def load_table(features_path, label_column: str | None = None,
               groups_path=None) -> tuple[FeatureTable, GroupMap | None]:
    """Read a features CSV (and optionally a ``feature,group`` CSV).

    Row numbers in error messages count data rows from 1; the header is row 0.
    """
    path = Path(features_path)
    if not path.is_file():
        raise DataError(f"features file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    if label_column is not None and label_column not in header:
        raise DataError(f"label column {label_column!r} not in header")

    label_pos = header.index(label_column) if label_column is not None else None
    names = [h for i, h in enumerate(header) if i != label_pos]
    values = np.empty((len(rows), len(names)))
    labels = np.empty(len(rows), dtype=int) if label_pos is not None else None
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"ragged row {r}: expected {len(header)} cells, got {len(row)}")
        j = 0
        for c, cell in enumerate(row):
            if c == label_pos:
                v = _parse_float(cell, r, header[c])
                if v not in (0.0, 1.0):
                    raise DataError(f"label at row {r} is {cell!r}, expected 0 or 1")
                labels[r - 1] = int(v)
            else:
                values[r - 1, j] = _parse_float(cell, r, header[c])
                j += 1

    table = FeatureTable(tuple(names), values, labels)
    groups = load_groups(groups_path, table.feature_names) if groups_path is not None else None
    return table, groups


def load_groups(groups_path, feature_names: Sequence[str] | None = None) -> GroupMap:
    path = Path(groups_path)
    if not path.is_file():
        raise DataError(f"groups file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["feature", "group"]:
            raise DataError("groups file must have header 'feature,group'")
        order: dict[str, list[str]] = {}
        for r, row in enumerate(reader, start=1):
            feat, grp = (row.get("feature") or "").strip(), (row.get("group") or "").strip()
            if not feat or not grp:
                raise DataError(f"groups file row {r} is incomplete")
            order.setdefault(grp, []).append(feat)
    # members listed in table order so selections merge deterministically
    if feature_names is not None:
        rank = {f: i for i, f in enumerate(feature_names)}
        for members in order.values():
            members.sort(key=lambda f: rank.get(f, len(rank)))
    gmap = GroupMap(tuple((g, tuple(ms)) for g, ms in order.items()))
    if feature_names is not None:
        gmap.validate_against(feature_names)
    return gmap


def write_table(table: FeatureTable, path, label_column: str = "y") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(table.feature_names)
        if table.labels is not None:
            header.append(label_column)
        w.writerow(header)
        for i in range(table.n):
            row = [repr(float(v)) for v in table.values[i]]
            if table.labels is not None:
                row.append(str(int(table.labels[i])))
            w.writerow(row)


def write_groups(groups: GroupMap, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "group"])
        for name, members in groups.groups:
            for feat in members:
                w.writerow([feat, name])


# ---------------------------------------------------------- standardization

def standardize(table: FeatureTable) -> tuple[FeatureTable, StandardizationParams]:
    """Z-score every column with the population (divisor n) deviation.

    Constant columns are dropped and listed in ``dropped_features``.
    """
    if table.n < 2:
        raise DataError("standardization needs at least 2 rows")
    means = table.values.mean(axis=0)
    centered = table.values - means
    sds = np.sqrt(np.mean(centered**2, axis=0))
    # relative guard: float noise on a constant column is not signal
    scale = np.maximum(np.abs(means), 1.0)
    keep = sds > 1e-12 * scale
    if not keep.any():
        raise DataError("no informative features: every column has zero deviation")
    names = tuple(n for n, k in zip(table.feature_names, keep) if k)
    dropped = tuple(n for n, k in zip(table.feature_names, keep) if not k)
    params = StandardizationParams(names, means[keep], sds[keep], dropped)
    return apply_standardization(table, params), params


def apply_standardization(table: FeatureTable, params: StandardizationParams) -> FeatureTable:
    idx = table.column_index(params.feature_names)
    values = (table.values[:, idx] - params.means) / params.sds
    return FeatureTable(params.feature_names, values, table.labels)


# -------------------------------------------------------------------- split

def split(table: FeatureTable, test_fraction: float, seed: int) -> tuple[FeatureTable, FeatureTable]:
    train_idx, test_idx = split_indices(table.labels, test_fraction, seed)
    return table.take_rows(train_idx), table.take_rows(test_idx)


def split_indices(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified row assignment; both index arrays come back sorted."""
    if labels is None:
        raise DataError("split requires labels")
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise DataError(f"class {cls} has {members.size} member(s); need at least 2")
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1)
        test.extend(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.asarray(test, dtype=int))
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


# --------------------------------------------------------------- generator

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureTable, GroupMap, np.ndarray]:
    """Draw a one-factor-per-group table with logistic labels.

    Within each group the informative features come first; they are
    ``factor_loading * z_g + noise``, the rest are independent N(0, 1).
    Returns the table, its group map and the per-feature truth mask.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    latent = rng.standard_normal((n, len(spec.group_specs)))
    columns, names, truth, groups = [], [], [], []
    for g, gs in enumerate(spec.group_specs):
        block = rng.standard_normal((n, gs.n_features))
        block[:, :gs.n_informative] = (
            gs.factor_loading * latent[:, [g]]
            + gs.feature_noise_sd * block[:, :gs.n_informative])
        members = tuple(f"{gs.name}_{i:02d}" for i in range(gs.n_features))
        columns.append(block)
        names.extend(members)
        truth.extend([True] * gs.n_informative + [False] * (gs.n_features - gs.n_informative))
        groups.append((gs.name, members))
    score = spec.label_intercept + latent @ np.asarray(spec.label_coefficients)
    labels = (rng.random(n) < _sigmoid(score)).astype(int)
    table = FeatureTable(tuple(names), np.hstack(columns), labels)
    return table, GroupMap(tuple(groups)), np.asarray(truth)
