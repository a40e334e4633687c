"""
Configuration for the DORE simulator
Environment-driven defaults shared by the CLI, the batch runner and the job API
"""

import logging
import os

from dotenv import load_dotenv

# Load .env file ONLY for local development
# In production, environment variables are injected directly
if os.getenv("ENVIRONMENT") != "production":
    load_dotenv(override=False)

# =============================================================================
# Output Locations
# =============================================================================

OUTPUT_DIR = os.getenv("OUTPUT_DIR", "./out")
JOBS_DIR = os.getenv("JOBS_DIR", "./jobs")

# =============================================================================
# Simulation Defaults
# =============================================================================

DEFAULT_THREADS = int(os.getenv("DEFAULT_THREADS", "1"))
MAX_PARALLEL_RUNS = int(os.getenv("MAX_PARALLEL_RUNS", "1"))  # Concurrent (method, seed) runs per batch
STRICT_THEOREM = os.getenv("STRICT_THEOREM", "false").lower() == "true"

# =============================================================================
# Logging
# =============================================================================

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

# =============================================================================
# Server Configuration
# =============================================================================

ENVIRONMENT = os.getenv("ENVIRONMENT", "development")
PORT = int(os.getenv("PORT", "8000"))

logger = logging.getLogger(__name__)


def configure_logging(level: str = LOG_LEVEL) -> None:
    """
    Install one stream handler on the package logger.

    Args:
        level: Logging level name (DEBUG, INFO, ...)
    """
    package_logger = logging.getLogger("app")
    package_logger.setLevel(level)
    if not any(getattr(h, "_dore_handler", False) for h in package_logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._dore_handler = True
        package_logger.addHandler(handler)


def log_configuration_summary() -> None:
    """Log the resolved settings and warn about suspicious values"""
    logger.info("=" * 60)
    logger.info("CONFIGURATION SUMMARY:")
    logger.info(f"Environment: {ENVIRONMENT}")
    logger.info(f"Output directory: {OUTPUT_DIR}")
    logger.info(f"Jobs directory: {JOBS_DIR}")
    logger.info(f"Default threads: {DEFAULT_THREADS}")
    logger.info(f"Parallel runs per batch: {MAX_PARALLEL_RUNS}")
    logger.info(f"Strict theorem validation: {STRICT_THEOREM}")
    logger.info("=" * 60)

    if DEFAULT_THREADS < 1:
        logger.warning("⚠️  DEFAULT_THREADS < 1, falling back to a single thread.")

    if MAX_PARALLEL_RUNS < 1:
        logger.warning("⚠️  MAX_PARALLEL_RUNS < 1, batches will run sequentially.")
