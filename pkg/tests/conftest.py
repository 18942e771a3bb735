import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

TMP_DIR = Path(__file__).resolve().parents[1] / ".pytest-tmp"
TMP_DIR.mkdir(exist_ok=True)
os.environ.setdefault("TMPDIR", str(TMP_DIR))
tempfile.tempdir = str(TMP_DIR)

# Ensure the pgp_risk package (under src/) is importable when running pytest
SRC_DIR = Path(__file__).resolve().parents[1] / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

SLOW = os.getenv("PGP_RISK_SLOW_TESTS") == "1"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in (
        "PGP_RISK_WINDOW_LEN",
        "PGP_RISK_NEIGHBORS",
        "PGP_RISK_ALPHA",
        "PGP_RISK_JOBS",
        "PGP_RISK_OUT",
        "PGP_RISK_LENGTH_FLOOR",
        "PGP_RISK_LOG_LEVEL",
    ):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def walk_prices():
    """Seeded geometric random walk; call with (length, seed)."""

    def make(length=200, seed=0, vol=0.01):
        rng = np.random.default_rng(seed)
        return 100.0 * np.exp(np.concatenate(([0.0], np.cumsum(vol * rng.standard_normal(length - 1)))))

    return make


@pytest.fixture
def write_prices(tmp_path):
    """Write `lines` under a date,price header and return the path."""

    def write(lines, name="prices.csv", header="date,price"):
        path = tmp_path / name
        path.write_text("\n".join([header, *lines]) + "\n", encoding="utf-8")
        return path

    return write
