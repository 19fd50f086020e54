from pathlib import Path

import numpy as np
import pytest

from codebook import build_dsqc1_codebook, build_dsqc2_codebook, build_qsdc_codebook
from config import SystemConfig

CHANNEL_DIR = Path(__file__).resolve().parent.parent / "data" / "channels"


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def channel_dir():
    return CHANNEL_DIR


@pytest.fixture(scope="session")
def dsqc1_codebook():
    return build_dsqc1_codebook()


@pytest.fixture(scope="session")
def dsqc2_codebook():
    return build_dsqc2_codebook()


@pytest.fixture(scope="session")
def qsdc_codebook():
    return build_qsdc_codebook()


@pytest.fixture
def system_config(monkeypatch):
    """Settings isolated from the developer's .env"""
    for name in ("LOG_LEVEL", "LOG_DIR", "REPORT_DIR", "MAX_CONCURRENT_WORKERS", "LEAKAGE_BATCH_SIZE"):
        monkeypatch.setenv(name, "")
    monkeypatch.setenv("MAX_CONCURRENT_WORKERS", "2")
    monkeypatch.setenv("LEAKAGE_BATCH_SIZE", "500")
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    monkeypatch.setenv("CHANNEL_SPEC_DIR", str(CHANNEL_DIR))
    return SystemConfig()
