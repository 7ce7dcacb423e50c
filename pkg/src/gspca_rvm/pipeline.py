"""End-to-end distress classifier: split, standardize, screen features,
choose a kernel width, fit the RVM, and score the held-out rows."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .dataset import (DataError, FeatureTable, GroupMap, StandardizationParams,
                      apply_standardization, split_indices, standardize)
from .gspca import (GroupSelection, GroupSelectionResult, gspca_select,
                    no_selection, spca_global_select)
from .rvm import (KernelSpec, RvmModel, RvmOptions, WidthScores,
                  fit_classification, predict_proba, select_kernel_width)
from .spca import SpcaConfig

FORMAT_VERSION = 1
SELECTORS = ("gspca", "spca_global", "none")


@dataclass(frozen=True)
class PipelineConfig:
    selector: str = "gspca"
    per_group_components: int = 1
    global_components: int = 4
    lambda_ridge: float = 1e-4
    lambda_lasso: float | tuple[float, ...] = 0.0
    max_outer_iterations: int = 200
    convergence_tolerance: float = 1e-6
    kernel_family: str = "gaussian"
    width_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    loo_cutoff: int = 200
    k_folds: int = 10
    rvm_max_outer_iterations: int = 1000
    rvm_tolerance: float = 1e-6
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.lambda_lasso, (list, tuple)):
            object.__setattr__(self, "lambda_lasso", tuple(float(v) for v in self.lambda_lasso))
        object.__setattr__(self, "width_grid", tuple(float(v) for v in self.width_grid))
        self.validate()

    def validate(self) -> None:
        def bad(key, msg):
            raise ValueError(f"{key}: {msg}")
        if self.selector not in SELECTORS:
            bad("selector", f"must be one of {', '.join(SELECTORS)}")
        if self.kernel_family not in ("gaussian", "laplacian"):
            bad("kernel_family", "must be 'gaussian' or 'laplacian'")
        if not self.width_grid:
            bad("width_grid", "must not be empty")
        if any(not w > 0 for w in self.width_grid):
            bad("width_grid", "widths must be positive")
        for key in ("per_group_components", "global_components", "max_outer_iterations",
                    "rvm_max_outer_iterations", "k_folds"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        if self.k_folds < 2:
            bad("k_folds", "must be >= 2")
        if self.loo_cutoff < 0:
            bad("loo_cutoff", "must be >= 0")
        if self.lambda_ridge < 0:
            bad("lambda_ridge", "must be >= 0")
        lasso = self.lambda_lasso if isinstance(self.lambda_lasso, tuple) else (self.lambda_lasso,)
        if any(v < 0 for v in lasso):
            bad("lambda_lasso", "must be >= 0")
        if self.convergence_tolerance <= 0 or self.rvm_tolerance <= 0:
            bad("convergence_tolerance" if self.convergence_tolerance <= 0 else "rvm_tolerance",
                "must be > 0")
        if not 0.0 < self.test_fraction < 1.0:
            bad("test_fraction", "must be in (0, 1)")
        if self.seed < 0:
            bad("seed", "must be non-negative")

    def spca_config(self, k: int = 1) -> SpcaConfig:
        lasso = self.lambda_lasso
        if isinstance(lasso, tuple) and len(lasso) == 1:
            lasso = lasso[0]
        return SpcaConfig(k=k, lambda_ridge=self.lambda_ridge, lambda_lasso=lasso,
                          max_outer_iterations=self.max_outer_iterations,
                          convergence_tolerance=self.convergence_tolerance)

    def rvm_options(self) -> RvmOptions:
        return RvmOptions(max_outer_iterations=self.rvm_max_outer_iterations,
                          tolerance=self.rvm_tolerance)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["width_grid"] = list(self.width_grid)
        if isinstance(self.lambda_lasso, tuple):
            out["lambda_lasso"] = list(self.lambda_lasso)
        return out


@dataclass(frozen=True)
class TrainedPipeline:
    standardization: StandardizationParams
    selection: GroupSelectionResult
    model: RvmModel
    config: PipelineConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model.input_dim != len(self.selection.merged_features):
            raise ValueError("model input dimension does not match the selected features")
        missing = set(self.selection.merged_features) - set(self.standardization.feature_names)
        if missing:
            raise ValueError(f"selected features not standardized: {', '.join(sorted(missing))}")


@dataclass(frozen=True)
class EvaluationReport:
    n_test: int
    accuracy: float
    type1_error: float
    type2_error: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_selected_features: int
    n_relevance_vectors: int
    undefined_rates: tuple[str, ...] = ()

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.tn, self.fn

    def to_dict(self) -> dict:
        def num(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return {
            "n_test": self.n_test,
            "accuracy": num(self.accuracy),
            "type1_error": num(self.type1_error),
            "type2_error": num(self.type2_error),
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "n_selected_features": self.n_selected_features,
            "n_relevance_vectors": self.n_relevance_vectors,
            "undefined_rates": list(self.undefined_rates),
        }


def confusion_report(labels, predicted, n_selected_features: int = 0,
                     n_relevance_vectors: int = 0) -> EvaluationReport:
    """Counts first, then rates. Positive class = distressed (label 1).

    A rate whose denominator is zero is NaN and named in ``undefined_rates``.
    """
    labels = np.asarray(labels).astype(int)
    predicted = np.asarray(predicted).astype(int)
    tp = int(np.sum((labels == 1) & (predicted == 1)))
    fp = int(np.sum((labels == 0) & (predicted == 1)))
    tn = int(np.sum((labels == 0) & (predicted == 0)))
    fn = int(np.sum((labels == 1) & (predicted == 0)))
    n = tp + fp + tn + fn
    undefined = []

    def rate(num, den, name):
        if den == 0:
            undefined.append(name)
            return float("nan")
        return num / den

    accuracy = rate(tp + tn, n, "accuracy")
    type1 = rate(fn, tp + fn, "type1_error")
    type2 = rate(fp, tn + fp, "type2_error")
    return EvaluationReport(n, accuracy, type1, type2, tp, fp, tn, fn,
                            n_selected_features, n_relevance_vectors, tuple(undefined))


# ------------------------------------------------------------- training

def _select(table: FeatureTable, groups: GroupMap | None, config: PipelineConfig,
            selector: str) -> GroupSelectionResult:
    if selector == "gspca":
        if groups is None:
            raise DataError("selector 'gspca' requires a group map")
        return gspca_select(table, groups.restricted_to(table.feature_names),
                            config.per_group_components,
                            config.spca_config(config.per_group_components))
    if selector == "spca_global":
        return spca_global_select(table, config.global_components,
                                  config.spca_config(config.global_components))
    restricted = groups.restricted_to(table.feature_names) if groups is not None else None
    return no_selection(table, restricted)


def select_features(table: FeatureTable, groups: GroupMap | None,
                    config: PipelineConfig) -> GroupSelectionResult:
    """Run the configured selector on an already standardized table."""
    return _select(table, groups, config, config.selector)


def train(table: FeatureTable, groups: GroupMap | None,
          config: PipelineConfig) -> tuple[TrainedPipeline, EvaluationReport]:
    config.validate()
    if table.labels is None:
        raise DataError("training table has no labels")
    if groups is not None:
        groups.validate_against(table.feature_names)
    elif config.selector == "gspca":
        raise DataError("selector 'gspca' requires a group map")

    train_idx, test_idx = split_indices(table.labels, config.test_fraction, config.seed)
    train_raw, test_raw = table.take_rows(train_idx), table.take_rows(test_idx)
    train_std, params = standardize(train_raw)

    selection = _select(train_std, groups, config, config.selector)
    if not selection.merged_features:
        raise DataError("selector removed all features")

    X = train_std.select_features(selection.merged_features).values
    y = train_std.labels
    options = config.rvm_options()
    kernel, scores = select_kernel_width(
        X, y, config.width_grid, mode="classification", family=config.kernel_family,
        loo_cutoff=config.loo_cutoff, k_folds=config.k_folds, seed=config.seed,
        options=options)
    model, diag = fit_classification(X, y, kernel, options)

    metadata = {
        "created_at": _timestamp(),
        "package_version": __version__,
        "n_train": int(train_idx.size),
        "width_search": {
            "scheme": scores.scheme,
            "n_folds": scores.n_folds,
            "widths": list(scores.widths),
            "scores": list(scores.scores),
            "failures": list(scores.failures),
            "selected_width": kernel.width,
        },
        "rvm_converged": bool(diag.converged),
        "rvm_outer_iterations": int(diag.outer_iterations),
    }
    pipeline = TrainedPipeline(params, selection, model, config, metadata)
    return pipeline, evaluate(pipeline, test_raw)


def _timestamp():
    # wall-clock time would make model files irreproducible
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    import datetime
    return datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc).isoformat()


def _project(pipeline: TrainedPipeline, raw: FeatureTable) -> np.ndarray:
    names = pipeline.selection.merged_features
    sub = raw.select_features(names)
    params = pipeline.standardization
    pos = {f: i for i, f in enumerate(params.feature_names)}
    idx = [pos[f] for f in names]
    sub_params = StandardizationParams(names, params.means[idx], params.sds[idx])
    return apply_standardization(sub, sub_params).values


def predict(pipeline: TrainedPipeline, raw: FeatureTable) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities of distress and 0/1 labels (1 iff probability >= 0.5)."""
    proba = predict_proba(pipeline.model, _project(pipeline, raw))
    return proba, (proba >= 0.5).astype(int)


def evaluate(pipeline: TrainedPipeline, labeled: FeatureTable) -> EvaluationReport:
    if labeled.labels is None:
        raise DataError("evaluation table has no labels")
    _, predicted = predict(pipeline, labeled)
    return confusion_report(labeled.labels, predicted,
                            len(pipeline.selection.merged_features),
                            pipeline.model.n_relevance_vectors)


@dataclass(frozen=True)
class ComparisonRow:
    selector: str
    report: EvaluationReport
    groups_touched: int | None

    def to_dict(self) -> dict:
        row = {"selector": self.selector}
        row.update(self.report.to_dict())
        row["groups_touched"] = self.groups_touched
        return row


def compare_selectors(table: FeatureTable, groups: GroupMap | None,
                      config: PipelineConfig, selectors=SELECTORS) -> list[ComparisonRow]:
    """Train once per selector on the same split and seed."""
    rows = []
    for selector in selectors:
        if selector == "gspca" and groups is None:
            continue
        pipeline, report = train(table, groups, replace(config, selector=selector))
        touched = pipeline.selection.groups_touched(groups) if groups is not None else None
        rows.append(ComparisonRow(selector, report, touched))
    return rows


# ---------------------------------------------------------- persistence

class PersistenceError(ValueError):
    pass


class SchemaError(PersistenceError):
    pass


class VersionError(PersistenceError):
    pass


def pipeline_to_dict(pipeline: TrainedPipeline) -> dict:
    params = pipeline.standardization
    sel = pipeline.selection
    model = pipeline.model
    return {
        "format_version": FORMAT_VERSION,
        "standardization": {f: {"mean": float(mu), "sd": float(sd)}
                            for f, mu, sd in zip(params.feature_names, params.means, params.sds)},
        "dropped_features": list(params.dropped_features),
        "selection": {
            "method_tag": sel.method_tag,
            "merged_features": list(sel.merged_features),
            "per_group": [{"group_name": g.group_name, "member_count": g.member_count,
                           "selected_feature_names": list(g.selected_feature_names),
                           "first_component_loadings": list(g.first_component_loadings)}
                          for g in sel.per_group],
        },
        "kernel": {"family": model.kernel.family, "width": model.kernel.width},
        "rvm": {
            "mode": model.mode,
            "relevance_vectors": model.relevance_vectors.tolist(),
            "weights": model.weights.tolist(),
            "bias_retained": model.bias_retained,
            "alphas": model.alphas.tolist(),
            "noise_variance": model.noise_variance,
        },
        "config": pipeline.config.to_dict(),
        "metadata": pipeline.metadata,
    }


def save_model(pipeline: TrainedPipeline, path) -> None:
    atomic_write_text(path, json.dumps(pipeline_to_dict(pipeline), indent=2) + "\n")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _get(doc, key, kind, where):
    path = f"{where}.{key}" if where else key
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing field {path}")
    value = doc[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"field {path} has wrong type {type(value).__name__}")
    return value


def _num_list(values, path):
    if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise SchemaError(f"field {path} must be a list of numbers")
    return [float(v) for v in values]


def _str_list(values, path):
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise SchemaError(f"field {path} must be a list of strings")
    return values


def pipeline_from_dict(doc: Any) -> TrainedPipeline:
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = _get(doc, "format_version", int, "")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format_version {version} (expected {FORMAT_VERSION})")

    std = _get(doc, "standardization", dict, "")
    names, means, sds = [], [], []
    for feat, entry in std.items():
        names.append(feat)
        means.append(_get(entry, "mean", float, f"standardization.{feat}"))
        sds.append(_get(entry, "sd", float, f"standardization.{feat}"))
    dropped = _str_list(_get(doc, "dropped_features", list, ""), "dropped_features")

    sel = _get(doc, "selection", dict, "")
    per_group = []
    for i, g in enumerate(_get(sel, "per_group", list, "selection")):
        where = f"selection.per_group[{i}]"
        per_group.append(GroupSelection(
            _get(g, "group_name", str, where), _get(g, "member_count", int, where),
            tuple(_str_list(_get(g, "selected_feature_names", list, where),
                            f"{where}.selected_feature_names")),
            tuple(_num_list(_get(g, "first_component_loadings", list, where),
                            f"{where}.first_component_loadings"))))
    selection = GroupSelectionResult(
        tuple(per_group),
        tuple(_str_list(_get(sel, "merged_features", list, "selection"), "selection.merged_features")),
        _get(sel, "method_tag", str, "selection"))

    kdoc = _get(doc, "kernel", dict, "")
    rdoc = _get(doc, "rvm", dict, "")
    rv = _get(rdoc, "relevance_vectors", list, "rvm")
    rows = [_num_list(r, f"rvm.relevance_vectors[{i}]") for i, r in enumerate(rv)]
    noise = rdoc.get("noise_variance", None)
    if noise is not None and (isinstance(noise, bool) or not isinstance(noise, (int, float))):
        raise SchemaError("field rvm.noise_variance must be a number or null")
    config_doc = _get(doc, "config", dict, "")
    try:
        kernel = KernelSpec(_get(kdoc, "family", str, "kernel"), _get(kdoc, "width", float, "kernel"))
        dim = len(selection.merged_features)
        model = RvmModel(
            _get(rdoc, "mode", str, "rvm"), kernel,
            np.asarray(rows, dtype=float).reshape(len(rows), dim),
            _num_list(_get(rdoc, "weights", list, "rvm"), "rvm.weights"),
            _get(rdoc, "bias_retained", bool, "rvm"),
            _num_list(_get(rdoc, "alphas", list, "rvm"), "rvm.alphas"),
            noise)
        params = StandardizationParams(tuple(names), means, sds, tuple(dropped))
        config = config_from_dict(config_doc, where="config")
        return TrainedPipeline(params, selection, model, config, dict(doc.get("metadata") or {}))
    except SchemaError:
        raise
    except (ValueError, DataError) as exc:
        raise SchemaError(f"invalid model document: {exc}") from None


def load_model(path) -> TrainedPipeline:
    path = Path(path)
    if not path.is_file():
        raise PersistenceError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from None
    return pipeline_from_dict(doc)


# --------------------------------------------------------------- config

_CONFIG_TYPES = {f.name: f for f in fields(PipelineConfig)}


def config_from_dict(doc: Any, where: str = "") -> PipelineConfig:
    """Build a config from a JSON object; every key optional, unknown keys rejected."""
    prefix = f"{where}." if where else ""
    if not isinstance(doc, dict):
        raise SchemaError(f"{where or 'config'} must be a JSON object")
    unknown = [k for k in doc if k not in _CONFIG_TYPES]
    if unknown:
        raise SchemaError(f"unknown config key {prefix}{unknown[0]}")
    defaults = PipelineConfig()
    values = {}
    for key, value in doc.items():
        default = getattr(defaults, key)
        path = prefix + key
        if key == "lambda_lasso":
            if isinstance(value, list):
                values[key] = tuple(_num_list(value, path))
            else:
                values[key] = _coerce(value, float, path)
        elif key == "width_grid":
            values[key] = tuple(_num_list(value, path))
        else:
            values[key] = _coerce(value, type(default), path)
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise SchemaError(f"{prefix}{exc}") from None


def _coerce(value, kind, path):
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return float(value) if kind is float else value


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise PersistenceError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(doc)
