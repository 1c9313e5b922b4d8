import logging
import logging.handlers
import sys
from pathlib import Path

ROOT_LOGGER = "semtrack"
MAX_BYTES = 10 * 1024 * 1024  # 10 MB
BACKUP_COUNT = 5


def setup_logger(name=ROOT_LOGGER, log_level=logging.INFO, log_file=None,
                 max_bytes=MAX_BYTES, backup_count=BACKUP_COUNT):
    """
    Setup logger with console output and optional file rotation.

    Args:
        name: Logger name
        log_level: Logging level (int or name such as "DEBUG")
        log_file: Optional path of a rotating log file
        max_bytes: Rotation size of the log file
        backup_count: Number of rotated files kept

    Returns:
        Configured logger instance
    """
    if isinstance(log_level, str):
        log_level = logging.getLevelName(log_level.upper())
        if not isinstance(log_level, int):
            log_level = logging.INFO

    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    logger.propagate = False

    # Reconfiguring only adjusts levels and the optional file handler
    if any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
           for h in logger.handlers):
        for handler in logger.handlers:
            handler.setLevel(log_level)
    else:
        # Console handler (terminal output)
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(log_level)
        console_format = logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        console_handler.setFormatter(console_format)
        logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        already = any(isinstance(h, logging.handlers.RotatingFileHandler)
                      and Path(h.baseFilename) == log_path.resolve()
                      for h in logger.handlers)
        if not already:
            log_path.parent.mkdir(parents=True, exist_ok=True)

            # File handler with rotation
            file_handler = logging.handlers.RotatingFileHandler(
                log_path,
                maxBytes=max_bytes,
                backupCount=backup_count,
                encoding='utf-8'
            )
            file_handler.setLevel(log_level)
            file_format = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            file_handler.setFormatter(file_format)
            logger.addHandler(file_handler)

    return logger


def get_logger(name=ROOT_LOGGER):
    """Get a logger below the semtrack root, configuring the root on first use."""
    root = logging.getLogger(ROOT_LOGGER)
    if not root.handlers:
        setup_logger(ROOT_LOGGER)
    if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
