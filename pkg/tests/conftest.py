import pytest

from shem.env import EnvConfig, HomeEnv
from shem.surrogate import collect_samples, train_surrogate
from shem.traces import split, synth_traces


@pytest.fixture(scope="session")
def default_split():
    return split(synth_traces(0, 75), 60, 15)


@pytest.fixture(scope="session")
def trained_surrogate(default_split):
    train, _ = default_split
    env = HomeEnv(EnvConfig(), train)
    model, rmse = train_surrogate(collect_samples(env, 5000, 1), epochs=200, seed=0)
    return model, rmse


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
