import logging
import os

from dotenv import load_dotenv

load_dotenv()


def get_logger(name: str = "bido") -> logging.Logger:
    logger = logging.getLogger(name)

    # Check if logger already has handlers to avoid duplicate logs
    if not logger.handlers:
        logger.setLevel(os.getenv("BIDO_LOG_LEVEL", "INFO").upper())
        logger.propagate = False

        formatter = logging.Formatter("%(asctime)s - %(name)s - %(message)s")

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        log_file = os.getenv("BIDO_LOG_FILE")
        if log_file:
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    return logger
