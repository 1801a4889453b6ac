import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tools"))  # brute-force oracles live next to the fixture generator

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A few utterances per split: enough for data-path, CLI and determinism tests."""
    from breathcue.synth import CorpusSpec, generate_corpus

    root = tmp_path_factory.mktemp("corpus")
    spec = CorpusSpec(counts={"train": {"bonafide": 6, "spoof": 8}, "eval": {"bonafide": 4, "spoof": 8}}, seed=3)
    generate_corpus(spec, root)
    return root


@pytest.fixture(scope="session")
def tiny_run(tiny_corpus, tmp_path_factory):
    """Two epochs on the tiny corpus; returns (config, TrainResult)."""
    from breathcue.config import RunConfig
    from breathcue.harness import train

    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig(lr=1e-3, encoder_lr=1e-4, max_epochs=2, train_dir=str(tiny_corpus / "train"),
                    eval_dir=str(tiny_corpus / "eval"), out_dir=str(out), seed=5)
    return cfg, train(cfg)


ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
        ACCEPTANCE.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
