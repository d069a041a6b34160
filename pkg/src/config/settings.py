"""
Simulator settings, read from the environment and an optional .env file.
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _flag(name: str, default: str = "0") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Settings:
    """Paths, resource limits and logging options."""

    # Output locations
    OUTPUT_DIR = os.getenv("OUTPUT_DIR", "data/runs")

    # Resource guard on composed Hilbert-space dimensions
    MAX_HILBERT_DIM = int(os.getenv("MAX_HILBERT_DIM", "200000"))

    # Worker pool size used when --threads is not given
    DEFAULT_THREADS = int(os.getenv("DEFAULT_THREADS", "1"))

    # Acceptance-scale tests are skipped unless this is set
    RUN_SLOW_TESTS = _flag("RUN_SLOW_TESTS")

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "data/logs/simulation.log")

settings = Settings()
