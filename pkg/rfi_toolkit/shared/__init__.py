# rfi_toolkit/shared/__init__.py
"""
Shared components and models for the RFI toolkit.
"""
import logging
import logging.handlers
from pathlib import Path
from typing import Optional

LOGGER_NAME = "rfi_toolkit"


def setup_logging(log_level=logging.INFO, log_to_file=False, log_dir: Optional[Path] = None):
    """
    Set up logging for the toolkit.
    
    Args:
        log_level: Logging level (default: INFO)
        log_to_file: Whether to log to file (default: False)
        log_dir: Directory for the rotating log file
                 (default: ~/.rfi_toolkit/logs)
    
    Returns:
        Logger object
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)
    
    # Reconfiguring replaces the previous handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    
    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    
    # Console handler writes to stderr so stdout stays machine readable
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    
    if log_to_file:
        log_dir = Path(log_dir) if log_dir else Path.home() / ".rfi_toolkit" / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_dir / "run.log", maxBytes=10*1024*1024, backupCount=5
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    
    logger.propagate = False
    return logger

# Create and export default logger
logger = setup_logging(log_level=logging.WARNING)
