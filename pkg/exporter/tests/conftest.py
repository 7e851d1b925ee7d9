import sys

import pytest

from exporter_helpers import TINY


@pytest.fixture(scope="session")
def tiny_wavlm_dir(tmp_path_factory):
    import torch
    from transformers import WavLMConfig, WavLMModel

    torch.manual_seed(0)
    model = WavLMModel(WavLMConfig(**TINY))
    path = tmp_path_factory.mktemp("models") / "tiny_wavlm"
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def tiny_hubert_dir(tmp_path_factory):
    import torch
    from transformers import HubertConfig, HubertModel

    torch.manual_seed(1)
    model = HubertModel(HubertConfig(**TINY))
    path = tmp_path_factory.mktemp("models") / "tiny_hubert"
    model.save_pretrained(path)
    return str(path)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_exporter_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria (exporter)")
        for line in lines:
            terminalreporter.write_line(line)
