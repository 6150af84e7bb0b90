import numpy as np
import pytest

from ldaucid.nn import Dense, ModelParams, init_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    return init_model(2, (16, 8), 2, seed=7)


def linear_model(weight, bias, classifier_weight=None, activation="identity"):
    w = np.asarray(weight, dtype=float)
    cw = np.eye(w.shape[0]) if classifier_weight is None else np.asarray(classifier_weight, dtype=float)
    return ModelParams([Dense(w, bias, activation)], [Dense(cw, np.zeros(cw.shape[0]), "identity")])


ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
