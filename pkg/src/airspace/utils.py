"""
Utility functions for the airspace simulator
"""

import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Union

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Setup logging configuration"""
    handlers: list = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


def create_output_directory(base_path: PathLike = "results") -> Path:
    """Create output directory if it doesn't exist"""
    output_dir = Path(base_path)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


@contextmanager
def atomic_path(target: PathLike) -> Iterator[Path]:
    """Yield a temporary sibling of `target` and move it into place on success"""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        dir=target.parent, prefix=f".{target.stem}.", suffix=target.suffix
    )
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(target: PathLike, text: str) -> Path:
    with atomic_path(target) as tmp:
        tmp.write_text(text, encoding="utf-8")
    return Path(target)


def write_frame(df: pd.DataFrame, target: PathLike) -> Path:
    """Write a table as CSV with a header row"""
    with atomic_path(target) as tmp:
        df.to_csv(tmp, index=False)
    logger.debug(f"Wrote {len(df)} rows to {target}")
    return Path(target)


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def save_summary(path: PathLike, summary: Dict[str, Any]) -> Path:
    """Save a JSON summary atomically"""
    try:
        atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        logger.info(f"Summary saved to {path}")
        return Path(path)
    except Exception as e:
        logger.error(f"Error saving summary: {e}")
        raise
