"""
Process settings for the airspace simulator
"""

import os
from typing import Any, Dict, List

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


class Config:
    """Application configuration class"""

    # Application settings
    APP_NAME = "Self-Organizing Airspace Simulator"
    APP_VERSION = "0.1.0"
    DEBUG = _flag("DEBUG", "false")

    # Logging settings
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "")

    # Output settings
    OUTPUT_DIRECTORY = os.getenv("OUTPUT_DIRECTORY", "results")
    ENABLE_EXCEL_EXPORT = _flag("ENABLE_EXCEL_EXPORT", "true")
    ENABLE_EVENT_LOGS = _flag("ENABLE_EVENT_LOGS", "true")

    # Run settings
    MAX_WORKERS = int(os.getenv("MAX_WORKERS", "1"))
    DEFAULT_SCENARIO = os.getenv("DEFAULT_SCENARIO", "configs/baseline.json")
    DEFAULT_MASTER_SEED = os.getenv("DEFAULT_MASTER_SEED", "")

    @classmethod
    def validate_config(cls) -> List[str]:
        """Validate configuration and return any errors"""
        errors = []

        if cls.LOG_LEVEL.upper() not in (
            "DEBUG",
            "INFO",
            "WARNING",
            "ERROR",
            "CRITICAL",
        ):
            errors.append(f"LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if cls.MAX_WORKERS < 1:
            errors.append("MAX_WORKERS must be positive")

        if cls.DEFAULT_MASTER_SEED:
            try:
                seed = int(cls.DEFAULT_MASTER_SEED)
                if not 0 <= seed < 2**64:
                    errors.append("DEFAULT_MASTER_SEED must fit in 64 unsigned bits")
            except ValueError:
                errors.append("DEFAULT_MASTER_SEED must be an integer")

        if not os.path.exists(cls.OUTPUT_DIRECTORY):
            try:
                os.makedirs(cls.OUTPUT_DIRECTORY, exist_ok=True)
            except Exception as e:
                errors.append(f"Cannot create output directory: {e}")

        return errors

    @classmethod
    def get_config_summary(cls) -> Dict[str, Any]:
        """Get configuration summary for display"""
        return {
            "app_name": cls.APP_NAME,
            "app_version": cls.APP_VERSION,
            "log_level": cls.LOG_LEVEL,
            "output_directory": cls.OUTPUT_DIRECTORY,
            "max_workers": cls.MAX_WORKERS,
            "enable_excel_export": cls.ENABLE_EXCEL_EXPORT,
            "enable_event_logs": cls.ENABLE_EVENT_LOGS,
            "default_scenario": cls.DEFAULT_SCENARIO,
        }


# Global configuration instance
config = Config()
