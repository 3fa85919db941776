from pathlib import Path

import pytest

from calabi_flow import parse_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def load_config(tmp_path):
    """Parse a shipped config with its output redirected to a temp directory."""

    def _load(name: str):
        cfg = parse_config(CONFIG_DIR / name)
        cfg.output_dir = str(tmp_path / name.removesuffix(".cfg"))
        return cfg

    return _load


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
