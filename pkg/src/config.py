import os
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _env(name: str, default: str) -> str:
    return os.getenv(name, default)


# Integer settings and the value used when the environment holds something else
INT_SETTINGS = {'MAX_CONCURRENT_WORKERS': 4, 'LEAKAGE_BATCH_SIZE': 2500}


@dataclass
class SystemConfig:
    """System configuration settings"""

    # Logging
    LOG_LEVEL: str = field(default_factory=lambda: _env('LOG_LEVEL', 'WARNING'))
    LOG_DIR: str = field(default_factory=lambda: _env('LOG_DIR', ''))

    # Report export (JSON + Excel copies of reports); empty disables export
    REPORT_DIR: str = field(default_factory=lambda: _env('REPORT_DIR', ''))

    # Monte Carlo fan-out
    MAX_CONCURRENT_WORKERS: int = field(default_factory=lambda: _env('MAX_CONCURRENT_WORKERS', '4'))
    LEAKAGE_BATCH_SIZE: int = field(default_factory=lambda: _env('LEAKAGE_BATCH_SIZE', '2500'))

    # Bundled channel specs
    CHANNEL_SPEC_DIR: str = field(default_factory=lambda: _env('CHANNEL_SPEC_DIR', 'data/channels'))

    def __post_init__(self):
        """Coerce integer settings and create directories if they don't exist"""
        self._problems = []
        for name, fallback in INT_SETTINGS.items():
            raw = getattr(self, name)
            try:
                setattr(self, name, int(raw))
            except (TypeError, ValueError):
                self._problems.append(f"{name} '{raw}' is not an integer, using {fallback}")
                setattr(self, name, fallback)

        if self.REPORT_DIR:
            Path(self.REPORT_DIR).mkdir(parents=True, exist_ok=True)
        if self.LOG_DIR:
            Path(self.LOG_DIR).mkdir(parents=True, exist_ok=True)

    def validate(self) -> bool:
        """Check settings; every problem is logged, not raised"""
        problems = list(self._problems)
        if not isinstance(getattr(logging, self.LOG_LEVEL.upper(), None), int):
            problems.append(f"LOG_LEVEL '{self.LOG_LEVEL}' is not a logging level")
        if self.MAX_CONCURRENT_WORKERS < 1:
            problems.append("MAX_CONCURRENT_WORKERS must be >= 1")
        if self.LEAKAGE_BATCH_SIZE < 1:
            problems.append("LEAKAGE_BATCH_SIZE must be >= 1")

        for problem in problems:
            logger.error(f"❌ Config: {problem}")
        return not problems

    @property
    def report_export_enabled(self) -> bool:
        return bool(self.REPORT_DIR)


def setup_logging(config: SystemConfig) -> None:
    """Install the process-wide logging handlers (stderr, optional dated file)"""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    handlers = [logging.StreamHandler()]
    if config.LOG_DIR:
        log_file = Path(config.LOG_DIR) / f"qsdc_sim_{datetime.now().strftime('%Y%m%d')}.log"
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.WARNING),
        format=log_format,
        handlers=handlers,
        force=True,
    )
