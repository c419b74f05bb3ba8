import sys
from pathlib import Path

from loguru import logger

LOG_FILE = "cutlab.log"
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"
CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


def setup_logging(log_dir="logs", level="INFO"):
    """Initializes the rotating log file and the colored console sink."""
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    logger.remove()  # Remove default handler
    logger.add(
        log_dir / LOG_FILE,
        rotation="1 MB",
        retention="10 days",
        level=level,
        encoding="utf-8",
        format=FILE_FORMAT,
    )
    logger.add(sys.stderr, level=level, format=CONSOLE_FORMAT, colorize=True)
    logger.info("Logging is set up.")
    return log_dir / LOG_FILE
