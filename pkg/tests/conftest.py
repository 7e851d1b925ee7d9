import sys

import pytest

from vocalbeat.network import ModelConfig, init_model


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(input_dim=5, model_dim=8, heads=2, head_dim=4,
                       ffn_dim=16, seed=3)


@pytest.fixture
def tiny_params(tiny_config):
    return init_model(tiny_config)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
