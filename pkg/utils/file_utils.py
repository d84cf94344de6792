"""
Utility functions for report files and output paths.

This module provides functions for writing report files atomically and for
building the paths of the files a run produces, so that a crashed or
interrupted run never leaves a half-written report behind.
"""

import logging
import os
import re
import tempfile
from typing import Optional

import config

logger = logging.getLogger(__name__)

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def is_regular_file_under(file_path: str, root: str) -> bool:
    """Whether ``file_path`` is a regular file (not a link) inside ``root``."""
    try:
        path = os.path.abspath(file_path)
        base = os.path.abspath(root)
        return (os.path.commonpath([path, base]) == base
                and os.path.isfile(path) and not os.path.islink(path))
    except (OSError, ValueError):
        return False


def get_file_extension(file_path: str) -> Optional[str]:
    """Lower-case extension without the dot, or None."""
    ext = os.path.splitext(file_path)[1]
    return ext[1:].lower() or None


def slugify(name: str) -> str:
    """Turn an experiment or property name into a file-name component."""
    slug = _UNSAFE.sub("-", name.strip()).strip("-")
    return slug or "unnamed"


def output_dir(out: Optional[str] = None) -> str:
    """The directory reports go to: ``out`` if given, else the configured one."""
    return os.path.abspath(out or config.OUTPUT_DIR)


def output_path(out: Optional[str], experiment: str, name: str, extension: str) -> str:
    """
    Path of one output file of a run.

    Args:
        out (Optional[str]): Output directory override.
        experiment (str): Experiment name; files are grouped per experiment.
        name (str): File name stem (certifier or matrix name).
        extension (str): File extension without the dot.

    Returns:
        str: ``<out>/<experiment>/<name>.<extension>``
    """
    return os.path.join(output_dir(out), slugify(experiment), f"{slugify(name)}.{extension}")


def atomic_write_text(path: str, text: str) -> str:
    """
    Write text to a file through a temporary file in the same directory.

    The temporary file is renamed over the target, so readers see either the
    old content or the complete new content.

    Args:
        path (str): Target file path; parent directories are created.
        text (str): Content to write.

    Returns:
        str: The absolute path written.
    """
    target = os.path.abspath(path)
    directory = os.path.dirname(target)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(target))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, target)
    except Exception as e:
        logger.error(f"Error writing {target}: {str(e)}")
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"Wrote {target}")
    return target
