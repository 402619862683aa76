"""
Artifact writing helpers.

Outputs are written to a temporary sibling file and renamed into place, so a
failed command never leaves a partial artifact behind.
"""

import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Union

from src.utils.logging import get_logger

logger = get_logger(__name__)


@contextmanager
def atomic_output(path: Union[str, Path], mode: str = "wb") -> Iterator:
    """
    Open a temporary file next to ``path`` and move it over ``path`` on success.

    Args:
        path: Final artifact location
        mode: File mode, ``"wb"`` or ``"w"``

    Yields:
        Writable file object
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
    try:
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and no whitespace variance, for byte-stable artifacts."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def write_run_sidecar(artifact: Union[str, Path], run_config: Dict[str, Any]) -> Path:
    """
    Echo the resolved run configuration next to a CSV artifact.

    Args:
        artifact: The artifact the configuration belongs to
        run_config: Fully resolved configuration and inputs

    Returns:
        Path of the written sidecar
    """
    sidecar = Path(f"{artifact}.run.json")
    with atomic_output(sidecar, "w") as handle:
        handle.write(json.dumps(run_config, sort_keys=True, indent=2, default=str))
        handle.write("\n")
    logger.debug(f"Wrote run sidecar {sidecar}")
    return sidecar


def remove_quietly(*paths: Union[str, Path]) -> None:
    """Delete files or directory trees if they exist; used to clean up after a failed command."""
    for path in paths:
        path = Path(path)
        if path.is_dir():
            shutil.rmtree(path, ignore_errors=True)
            continue
        try:
            path.unlink()
        except FileNotFoundError:
            pass
