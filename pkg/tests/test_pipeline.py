import json
import math
from dataclasses import replace

import numpy as np
import pytest

from gspca_rvm.dataset import (DataError, FeatureTable, StandardizationParams,
                               apply_standardization, split_indices, standardize)
from gspca_rvm.experiments import two_blobs
from gspca_rvm.pipeline import (PipelineConfig, SchemaError, VersionError, config_from_dict,
                                confusion_report, evaluate, load_model, pipeline_to_dict,
                                predict, save_model, train)
from gspca_rvm.rvm import predict_proba

BLOB_CONFIG = PipelineConfig(selector="none", width_grid=(0.1, 0.5), loo_cutoff=0, k_folds=3)


@pytest.fixture(scope="module")
def blob_pipeline():
    X, y = two_blobs(200, seed=3)
    table = FeatureTable(("x0", "x1"), X * [2.0, 0.5] + [10.0, -3.0], y)
    pipeline, report = train(table, None, BLOB_CONFIG)
    return table, pipeline, report


# ---------------------------------------------------------------- metrics

def test_confusion_hand_example():
    labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    predicted = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0]
    r = confusion_report(labels, predicted)
    assert r.confusion == (3, 1, 5, 1)
    assert r.accuracy == 0.8 and r.type1_error == 0.25
    assert abs(r.type2_error - 1 / 6) < 1e-12


def test_confusion_perfect_and_all_healthy():
    labels = np.array([0, 1, 1, 0, 1])
    perfect = confusion_report(labels, labels)
    assert (perfect.accuracy, perfect.type1_error, perfect.type2_error) == (1.0, 0.0, 0.0)
    healthy = confusion_report(labels, np.zeros(5))
    assert (healthy.type1_error, healthy.type2_error) == (1.0, 0.0)


def test_confusion_undefined_rates():
    r = confusion_report([0, 0, 0], [0, 1, 0])
    assert math.isnan(r.type1_error)
    assert r.undefined_rates == ("type1_error",)
    assert r.to_dict()["type1_error"] is None
    assert json.loads(json.dumps(r.to_dict()))["undefined_rates"] == ["type1_error"]


# ----------------------------------------------------- train and predict

def test_selector_none_on_blobs(blob_pipeline):
    _, pipeline, report = blob_pipeline
    assert report.accuracy >= 0.95
    assert report.n_test == 40
    assert report.n_selected_features == 2
    assert pipeline.metadata["width_search"]["scheme"] == "kfold"


def test_duplicated_rows_identical(blob_pipeline):
    table, pipeline, _ = blob_pipeline
    rows = table.take_rows(np.array([5, 5, 5]))
    proba, labels = predict(pipeline, rows)
    assert proba[0] == proba[1] == proba[2]
    assert labels[0] == labels[1] == labels[2]


def test_missing_feature_named(blob_pipeline):
    table, pipeline, _ = blob_pipeline
    with pytest.raises(DataError, match="x1"):
        predict(pipeline, table.select_features(["x0"]))


def test_training_table_confusion_by_counting(blob_pipeline):
    table, pipeline, _ = blob_pipeline
    _, labels = predict(pipeline, table)
    report = evaluate(pipeline, table)
    y = table.labels
    counts = (sum(1 for a, b in zip(y, labels) if a == 1 and b == 1),
              sum(1 for a, b in zip(y, labels) if a == 0 and b == 1),
              sum(1 for a, b in zip(y, labels) if a == 0 and b == 0),
              sum(1 for a, b in zip(y, labels) if a == 1 and b == 0))
    assert report.confusion == counts


def test_composition_matches_manual_chain(blob_pipeline):
    table, pipeline, _ = blob_pipeline
    p = pipeline.standardization
    manual_std = (table.values - p.means) / p.sds
    cols = [p.feature_names.index(f) for f in pipeline.selection.merged_features]
    manual = predict_proba(pipeline.model, manual_std[:, cols])
    np.testing.assert_array_equal(predict(pipeline, table)[0], manual)


def test_extra_feature_columns_ignored(blob_pipeline):
    table, pipeline, _ = blob_pipeline
    wider = FeatureTable(("noise", "x1", "x0"),
                         np.column_stack([np.ones(table.n), table.values[:, 1], table.values[:, 0]]))
    np.testing.assert_array_equal(predict(pipeline, wider)[0], predict(pipeline, table)[0])


def test_empty_width_grid_rejected_up_front():
    with pytest.raises(ValueError, match="width_grid"):
        PipelineConfig(width_grid=())


def test_selector_removing_everything(grouped_data, grouped_config):
    table, groups, _ = grouped_data
    config = replace(grouped_config, selector="spca_global", global_components=1, lambda_lasso=1e9)
    with pytest.raises(DataError, match="selector removed all features"):
        train(table, groups, config)


def test_gspca_requires_groups(grouped_data, grouped_config):
    with pytest.raises(DataError, match="group map"):
        train(grouped_data[0], None, grouped_config)


def test_gspca_pipeline_on_grouped_fixture(grouped_comparison):
    gspca, none = grouped_comparison["gspca"], grouped_comparison["none"]
    assert gspca.report.n_selected_features < 179
    assert gspca.report.accuracy >= none.report.accuracy - 0.02
    assert gspca.groups_touched > grouped_comparison["spca_global"].groups_touched


def test_training_is_deterministic(grouped_data, grouped_config, grouped_pipeline):
    table, groups, _ = grouped_data
    again = train(table, groups, grouped_config)
    assert json.dumps(pipeline_to_dict(again[0])) == json.dumps(pipeline_to_dict(grouped_pipeline[0]))
    assert again[1] == grouped_pipeline[1]


def test_outlier_in_held_out_row_does_not_leak(grouped_data, grouped_config, grouped_pipeline):
    table, groups, _ = grouped_data
    _, test_idx = split_indices(table.labels, grouped_config.test_fraction, grouped_config.seed)
    values = table.values.copy()
    values[test_idx[0], :] = 1e9
    tainted = FeatureTable(table.feature_names, values, table.labels)
    pipeline = train(tainted, groups, grouped_config)[0]
    base = grouped_pipeline[0]
    a, b = pipeline.standardization, base.standardization
    assert a.feature_names == b.feature_names and a.dropped_features == b.dropped_features
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.sds, b.sds)
    assert pipeline.selection.merged_features == base.selection.merged_features


# ------------------------------------------------------------ persistence

def test_round_trip(tmp_path, grouped_data, grouped_pipeline):
    pipeline = grouped_pipeline[0]
    save_model(pipeline, tmp_path / "m.json")
    loaded = load_model(tmp_path / "m.json")
    p0 = predict(pipeline, grouped_data[0])[0]
    p1 = predict(loaded, grouped_data[0])[0]
    assert np.abs(p0 - p1).max() < 1e-12
    assert loaded.selection.merged_features == pipeline.selection.merged_features
    assert loaded.config == pipeline.config


def test_version_mismatch(tmp_path, blob_pipeline):
    doc = pipeline_to_dict(blob_pipeline[1])
    doc["format_version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(VersionError, match="99"):
        load_model(tmp_path / "m.json")


def test_truncated_file(tmp_path, blob_pipeline):
    save_model(blob_pipeline[1], tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "m.json").write_text(text[: len(text) // 2])
    with pytest.raises(SchemaError):
        load_model(tmp_path / "m.json")


def test_schema_error_names_field(blob_pipeline):
    doc = pipeline_to_dict(blob_pipeline[1])
    doc["rvm"]["weights"] = "oops"
    with pytest.raises(SchemaError, match="rvm.weights"):
        from gspca_rvm.pipeline import pipeline_from_dict
        pipeline_from_dict(doc)
    del doc["kernel"]
    with pytest.raises(SchemaError, match="kernel"):
        pipeline_from_dict(doc)


# ---------------------------------------------------------------- config

def test_config_examples():
    assert config_from_dict({}) == PipelineConfig()
    c = config_from_dict({"selector": "gspca", "width_grid": [0.01, 0.1, 1.0]})
    assert c == replace(PipelineConfig(), width_grid=(0.01, 0.1, 1.0))
    with pytest.raises(SchemaError, match="selektor"):
        config_from_dict({"selektor": "gspca"})


def test_config_type_and_range_errors():
    with pytest.raises(SchemaError, match="seed: expected int"):
        config_from_dict({"seed": "1"})
    with pytest.raises(SchemaError, match="test_fraction"):
        config_from_dict({"test_fraction": 1.5})
    c = config_from_dict({"lambda_lasso": [1, 2], "per_group_components": 2})
    assert c.spca_config(2).lasso_vector().tolist() == [1.0, 2.0]
    assert config_from_dict(c.to_dict()) == c
