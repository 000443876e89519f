from dataclasses import replace
from pathlib import Path

import pytest

from scan.config import load_config
from scan.data import synth_dataset
from scan.training import train

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line for an acceptance criterion; echoed in the terminal summary."""
    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
_TRAINED: dict = {}


def pinned_config(name: str, **overrides):
    """A shipped config from ``configs/``; ``seed`` also reseeds the dataset."""
    cfg, _ = load_config(CONFIG_DIR / f"{name}.cfg")
    if "seed" in overrides:
        cfg = replace(cfg, dataset=replace(cfg.dataset, seed=overrides["seed"]))
    return replace(cfg, **overrides)


def trained(cfg):
    """Train once per distinct config per session; returns (net, history, data)."""
    if cfg not in _TRAINED:
        data = synth_dataset(cfg.dataset)
        net, history = train(cfg, data)
        _TRAINED[cfg] = (net, history, data)
    return _TRAINED[cfg]
