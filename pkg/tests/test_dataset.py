import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gspca_rvm.dataset import (DataError, FeatureTable, GroupMap, GroupSpec, SyntheticSpec,
                               apply_standardization, generate_synthetic, load_table,
                               split, split_indices, standardize, write_groups, write_table)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_table_with_label(tmp_path):
    f = write(tmp_path / "f.csv", "f1,f2,y\n1,2,0\n3,4,1\n5,6.5,0\n")
    table, groups = load_table(f, label_column="y")
    assert table.feature_names == ("f1", "f2")
    assert table.n == 3 and table.m == 2
    np.testing.assert_array_equal(table.labels, [0, 1, 0])
    assert table.values[2, 1] == 6.5
    assert groups is None


def test_load_table_non_numeric(tmp_path):
    f = write(tmp_path / "f.csv", "f1,f2\n1,2\n3,abc\n")
    with pytest.raises(DataError, match="non-numeric cell at row 2, column f2"):
        load_table(f)


def test_load_table_groups(tmp_path):
    f = write(tmp_path / "f.csv", "f1,f2,y\n1,2,0\n3,4,1\n5,6,0\n")
    g = write(tmp_path / "g.csv", "feature,group\nf1,G1\nf2,G2\n")
    _, groups = load_table(f, "y", g)
    assert groups.groups == (("G1", ("f1",)), ("G2", ("f2",)))


@pytest.mark.parametrize("body, message", [
    ("f1,f2\n1,2\n3\n", "ragged row 2"),
    ("f1,y\n1,2\n", "label at row 1"),
])
def test_load_table_errors(tmp_path, body, message):
    f = write(tmp_path / "f.csv", body)
    with pytest.raises(DataError, match=message):
        load_table(f, "y" if "y" in body.splitlines()[0] else None)


def test_load_table_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_table(tmp_path / "nope.csv")


@pytest.mark.parametrize("groups, message", [
    ("feature,group\nf1,G1\n", "omits feature"),
    ("feature,group\nf1,G1\nf2,G1\nf3,G2\n", "unknown feature"),
    ("feature,group\nf1,G1\nf2,G1\nf1,G2\n", "appears in groups"),
])
def test_group_map_must_partition(tmp_path, groups, message):
    f = write(tmp_path / "f.csv", "f1,f2\n1,2\n3,4\n")
    g = write(tmp_path / "g.csv", groups)
    with pytest.raises(DataError, match=message):
        load_table(f, None, g)


def test_round_trip_csv(tmp_path):
    table, groups, _ = generate_synthetic(SyntheticSpec(
        20, (GroupSpec("a", 3, 2, 1.0, 0.5), GroupSpec("b", 2, 1, 1.0, 0.5)), (1.0, -1.0)))
    write_table(table, tmp_path / "t.csv")
    write_groups(groups, tmp_path / "g.csv")
    back, gback = load_table(tmp_path / "t.csv", "y", tmp_path / "g.csv")
    np.testing.assert_array_equal(back.values, table.values)
    np.testing.assert_array_equal(back.labels, table.labels)
    assert gback == groups


def test_standardize_two_points():
    table = FeatureTable(("a",), np.array([[1.0], [3.0]]))
    std, params = standardize(table)
    np.testing.assert_allclose(std.values[:, 0], [-1.0, 1.0])
    assert params.means[0] == 2.0 and params.sds[0] == 1.0


def test_standardize_three_points():
    table = FeatureTable(("a",), np.array([[0.0], [1.0], [2.0]]))
    std, params = standardize(table)
    # population sd of (0, 1, 2) is sqrt(2/3)
    assert math.isclose(params.sds[0], math.sqrt(2 / 3), rel_tol=1e-15)
    np.testing.assert_allclose(std.values[:, 0], [-math.sqrt(1.5), 0.0, math.sqrt(1.5)],
                               rtol=1e-14)


def test_standardize_drops_constant():
    table = FeatureTable(("c", "v"), np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    std, params = standardize(table)
    assert params.dropped_features == ("c",)
    assert std.feature_names == ("v",)


def test_standardize_all_constant():
    with pytest.raises(DataError, match="no informative features"):
        standardize(FeatureTable(("c",), np.ones((4, 1))))


def test_apply_standardization():
    train = FeatureTable(("a",), np.array([[1.0], [3.0]]))
    _, params = standardize(train)
    out = apply_standardization(FeatureTable(("a",), np.array([[3.0]])), params)
    assert out.values[0, 0] == 1.0


def test_apply_standardization_missing_feature():
    _, params = standardize(FeatureTable(("f1", "f9"), np.array([[1.0, 2.0], [3.0, 5.0]])))
    with pytest.raises(DataError, match="f9"):
        apply_standardization(FeatureTable(("f1",), np.array([[1.0]])), params)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(2, 12), st.integers(1, 5)), elements=finite))
def test_standardize_properties(values):
    table = FeatureTable(tuple(f"f{i}" for i in range(values.shape[1])), values)
    try:
        std, params = standardize(table)
    except DataError:
        return
    assert np.all(np.abs(std.values.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(std.values.std(axis=0) - 1) < 1e-10)
    # applying the training params to the training table is the same transform
    again = apply_standardization(table, params)
    assert np.abs(again.values - std.values).max() <= 1e-12
    # standardizing a standardized table is a fixed point
    second, _ = standardize(std)
    assert np.abs(second.values - std.values).max() <= 1e-12


def labeled(n_pos, n_neg):
    labels = np.array([1] * n_pos + [0] * n_neg)
    return FeatureTable(("x",), np.arange(labels.size, dtype=float)[:, None], labels)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_split_stratified(seed):
    train, test = split(labeled(5, 5), 0.2, seed)
    assert test.n == 2 and sorted(test.labels) == [0, 1]
    assert train.n == 8


def test_split_half():
    train, test = split(labeled(2, 2), 0.5, 11)
    assert sorted(train.labels) == [0, 1] and sorted(test.labels) == [0, 1]


def test_split_deterministic():
    t = labeled(7, 9)
    a = split_indices(t.labels, 0.3, 5)
    b = split_indices(t.labels, 0.3, 5)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_split_small_class():
    with pytest.raises(DataError, match="class 1"):
        split(labeled(1, 5), 0.2, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_is_partition(n_pos, n_neg, frac, seed):
    t = labeled(n_pos, n_neg)
    train_idx, test_idx = split_indices(t.labels, frac, seed)
    both = np.concatenate([train_idx, test_idx])
    assert sorted(both) == list(range(t.n))
    for cls, size in ((1, n_pos), (0, n_neg)):
        in_test = int(np.sum(t.labels[test_idx] == cls))
        assert abs(in_test - size * frac) <= 1.0


def test_generate_grouped_dimensions(grouped_data):
    table, groups, truth = grouped_data
    assert table.m == 179 and table.n == 500
    assert int(truth.sum()) == 40
    assert len(groups.groups) == 12
    groups.validate_against(table.feature_names)


def test_generate_is_deterministic():
    spec = SyntheticSpec(50, (GroupSpec("a", 4, 2, 1.0, 0.3),), (2.0,), 0.5, seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert np.array_equal(a[0].values, b[0].values)
    assert np.array_equal(a[0].labels, b[0].labels)


def test_generate_zero_coefficients_balanced():
    n = 4000
    spec = SyntheticSpec(n, (GroupSpec("a", 3, 2, 1.0, 0.3),), (0.0,), 0.0, seed=3)
    table, _, _ = generate_synthetic(spec)
    # binomial concentration: |p_hat - 0.5| well inside 4 / sqrt(n)
    assert abs(table.labels.mean() - 0.5) < 4 / math.sqrt(n)


def test_generate_zero_loading_is_noise():
    spec = SyntheticSpec(3000, (GroupSpec("a", 3, 2, 0.0, 1.0),), (1.0,), seed=1)
    table, _, truth = generate_synthetic(spec)
    assert truth.tolist() == [True, True, False]
    corr = np.corrcoef(table.values.T)
    assert np.abs(corr[np.triu_indices(3, 1)]).max() < 0.06


def test_synthetic_spec_validation():
    with pytest.raises(DataError):
        SyntheticSpec(10, (GroupSpec("a", 2, 3, 1.0, 0.1),), (1.0,))
    with pytest.raises(DataError):
        SyntheticSpec(10, (GroupSpec("a", 2, 1, 1.0, -0.1),), (1.0,))


def test_group_map_rejects_empty_group():
    with pytest.raises(DataError, match="empty"):
        GroupMap((("a", ()),))
