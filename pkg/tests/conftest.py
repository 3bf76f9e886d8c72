import pytest

from spinebpd.nn_core import ModelConfig
from spinebpd.synthgen import generate_dataset

SMALL_COUNTS = {"train": 6, "test": 2, "val": 2}
SMALL_MODEL = ModelConfig(input_height=64, input_width=32, conv_channels=(4, 4, 8, 8, 8), fc_sizes=(32, 32, 144),
                          dropout_rate=0.25)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture(scope="session")
def small_data(tmp_path_factory):
    """Ten 64x32 samples; enough to exercise every code path quickly."""
    out = tmp_path_factory.mktemp("small") / "data"
    generate_dataset(5, out, SMALL_COUNTS, height=64, width=32)
    return out


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk") / "data"
    generate_dataset(0, out, {"train": 8, "test": 2, "val": 2})
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
