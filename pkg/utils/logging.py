"""
Logging utilities for the unlearning pipeline.
"""

import os
import sys
import json
import logging
import tempfile
from datetime import datetime
from typing import Any, Dict, Tuple

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(output_dir: str, log_level: str = "INFO") -> logging.Logger:
    """Configure root logging to `<output_dir>/logs/main.log` and stdout."""
    level = getattr(logging, log_level.upper())

    logs_dir = os.path.join(output_dir, 'logs')
    os.makedirs(logs_dir, exist_ok=True)

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(logs_dir, 'main.log')),
            logging.StreamHandler(sys.stdout)
        ]
    )

    return logging.getLogger("etid")


def run_logger(run_name: str, logs_dir: str) -> Tuple[logging.Logger, str]:
    """Set up a dedicated file logger for one (method, seed) run."""
    os.makedirs(logs_dir, exist_ok=True)

    safe_name = run_name.replace(os.sep, "_").replace("/", "_")
    log_file = os.path.join(logs_dir, f"{safe_name}.log")

    file_handler = logging.FileHandler(log_file, mode='w')
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))

    logger = logging.getLogger(f"etid.run.{safe_name}")
    logger.setLevel(logging.INFO)

    # Replace handlers left over from an earlier run with the same name
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    logger.addHandler(file_handler)

    return logger, log_file


def close_run_logger(logger: logging.Logger):
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def log_run_event(output_dir: str, event_type: str, details: Dict[str, Any]):
    """
    Append an event to `<output_dir>/run_log.json`.
    """
    log_file = os.path.join(output_dir, 'run_log.json')

    try:
        with open(log_file, 'r') as f:
            events = json.load(f)
        if not isinstance(events, list):
            events = []
    except (FileNotFoundError, json.JSONDecodeError):
        events = []

    events.append({
        'timestamp': datetime.now().isoformat(),
        'event_type': event_type,
        'details': details
    })

    os.makedirs(output_dir, exist_ok=True)
    with tempfile.NamedTemporaryFile(mode='w', delete=False, dir=output_dir) as temp_file:
        json.dump(events, temp_file, indent=2, default=str)
        temp_name = temp_file.name
    os.replace(temp_name, log_file)
