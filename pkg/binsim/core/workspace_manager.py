"""
Run workspace management.

Each search or evaluation run owns a directory:

    <output_dir>/<run_id>/
        run_config.json
        checkpoints/
        logs/
        results/

JSON files are written atomically (temp file + os.replace); ledgers are
JSON-lines appended under a lock so concurrent evaluations can share them.
"""

import os
import logging
import tempfile
import threading
from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional
from pathlib import Path
from dataclasses import dataclass

from ..utils.optional_imports import safe_json_dumps, safe_json_loads
from ..utils.schema_validator import RunConfig, config_hash

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.json"


@dataclass
class WorkspaceConfig:
    """Directory layout of a run."""
    run_id: str
    workspace_path: str
    config_hash: str
    created_at: str

    checkpoints_dir: str = "checkpoints"
    logs_dir: str = "logs"
    results_dir: str = "results"

    @property
    def root(self) -> Path:
        return Path(self.workspace_path)

    def path(self, category: str, name: str) -> Path:
        return self.root / getattr(self, f"{category}_dir") / name


def _write_text_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: Path, data: Any):
    """Write ``data`` as JSON so readers never see a partial file."""
    _write_text_atomic(Path(path), safe_json_dumps(data, indent=True))


def read_json(path: Path) -> Any:
    with open(path, "r") as f:
        return safe_json_loads(f.read())


class JsonlWriter:
    """Thread-safe JSON-lines appender."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: Dict[str, Any]):
        line = safe_json_dumps(record)
        with self._lock:
            with open(self.path, "a") as f:
                f.write(line + "\n")

    def truncate(self, keep: int) -> List[Dict[str, Any]]:
        """Drop every record after the first ``keep``; returns the records kept."""
        with self._lock:
            records = list(read_jsonl(self.path))[:max(keep, 0)] if self.path.exists() else []
            _write_text_atomic(self.path, "".join(safe_json_dumps(r) + "\n" for r in records))
        return records


def read_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if line:
                yield safe_json_loads(line)


class WorkspaceManager:
    """
    Creates and reopens run workspaces under a base directory.

    Run ids are ``YYYYmmdd_HHMMSS_<config hash>`` so every artifact of a
    run can be traced back to the exact configuration that produced it.
    """

    def __init__(self, base_workspace_dir: str = "runs"):
        self.base_dir = Path(base_workspace_dir).resolve()
        self.base_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"WorkspaceManager initialized with base directory: {self.base_dir}")

    def create_workspace(self, config: RunConfig, run_id: Optional[str] = None, suffix: str = "") -> WorkspaceConfig:
        digest = config_hash(config)
        now = datetime.now()
        run_id = run_id or f"{now.strftime('%Y%m%d_%H%M%S')}_{digest}{suffix}"
        workspace = WorkspaceConfig(
            run_id=run_id,
            workspace_path=str(self.base_dir / run_id),
            config_hash=digest,
            created_at=now.isoformat(),
        )
        for sub in (workspace.checkpoints_dir, workspace.logs_dir, workspace.results_dir):
            (workspace.root / sub).mkdir(parents=True, exist_ok=True)
        write_json_atomic(workspace.root / RUN_CONFIG_FILE, {
            "run_id": run_id,
            "config_hash": digest,
            "created_at": workspace.created_at,
            "config": config.model_dump(mode="json"),
        })
        logger.info(f"Created run workspace {workspace.root}")
        return workspace

    def open_workspace(self, run_dir: str) -> WorkspaceConfig:
        """Reopen an existing run directory (used on resume)."""
        root = Path(run_dir).resolve()
        meta = read_json(root / RUN_CONFIG_FILE)
        return WorkspaceConfig(
            run_id=meta["run_id"],
            workspace_path=str(root),
            config_hash=meta["config_hash"],
            created_at=meta["created_at"],
        )

    def list_workspaces(self) -> List[str]:
        return sorted(
            item.name for item in self.base_dir.iterdir()
            if item.is_dir() and (item / RUN_CONFIG_FILE).exists()
        )

    @staticmethod
    def latest_checkpoint(workspace: WorkspaceConfig) -> Optional[Path]:
        checkpoints = sorted((workspace.root / workspace.checkpoints_dir).glob("checkpoint_*.json"))
        return checkpoints[-1] if checkpoints else None
