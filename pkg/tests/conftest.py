import numpy as np
import pytest

from gspca_rvm.dataset import generate_synthetic
from gspca_rvm.experiments import grouped_spec
from gspca_rvm.pipeline import PipelineConfig

# lasso penalty tuned for n = 400-500 standardized rows of the 12-group fixture
GROUPED_LAMBDA = 200.0


@pytest.fixture(scope="session")
def grouped_data():
    return generate_synthetic(grouped_spec(seed=0))


@pytest.fixture(scope="session")
def grouped_config():
    return PipelineConfig(lambda_lasso=GROUPED_LAMBDA, width_grid=(5e-4, 2e-3, 8e-3),
                          k_folds=3, seed=0)


def standardized(X):
    X = np.asarray(X, dtype=float)
    return (X - X.mean(axis=0)) / X.std(axis=0)


@pytest.fixture(scope="session")
def grouped_pipeline(grouped_data, grouped_config):
    from gspca_rvm.pipeline import train
    table, groups, _ = grouped_data
    return train(table, groups, grouped_config)


@pytest.fixture(scope="session")
def grouped_comparison(grouped_data, grouped_config):
    from gspca_rvm.pipeline import compare_selectors
    table, groups, _ = grouped_data
    return {row.selector: row for row in compare_selectors(table, groups, grouped_config)}


# ------------------------------------------------- acceptance summary lines

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
