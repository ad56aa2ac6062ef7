"""
Growth-fragmentation certificate toolkit - entry point.

Subcommands: check-hypotheses, eigen, evolve, drift, minorise, certify,
rate, pipeline, oracle. Exit codes: 0 success or expected negative,
1 gate failure, 2 configuration error.
"""

import logging
import sys

import config
from src.handlers.commands import router

# Configure logging
logging.basicConfig(
    level=config.LOG_LEVEL,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """Parse the subcommand and run it."""
    logger.debug(f"Threads={config.THREADS}, seed={config.SEED}, output={config.OUTPUT_DIR}")
    return router.dispatch(argv)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted")
        sys.exit(130)
