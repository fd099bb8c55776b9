"""
Run lifecycle: ledger record, progress logging and the manifest every command
leaves next to its outputs (also when it fails).
"""
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import orjson

from inffusion.config import settings
from inffusion.errors import InfFusionError
from inffusion.schemas.reports import RunManifest, RunStatus
from inffusion.utils.id_gen import content_hash, generate_id
from inffusion.utils.logging import log_error_with_context, log_run_progress

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _ledger_session():
    from inffusion.db.base import create_tables, get_db_session
    create_tables()
    return get_db_session()


class RunTracker:
    """
    Context manager around one command.

    Entering records the run as running; leaving writes exactly one manifest into
    `out_dir` and marks the run completed or failed. Exceptions propagate.
    """

    def __init__(
        self,
        command: str,
        out_dir: str,
        argv: Optional[Sequence[str]] = None,
        config: Optional[Dict[str, Any]] = None,
        seed: Optional[int] = None,
        inputs: Optional[Sequence[str]] = None,
        run_id: Optional[str] = None,
    ):
        self.run_id = run_id or generate_id()
        self.command = command
        self.out_dir = out_dir
        self.manifest = RunManifest(
            run_id=self.run_id,
            command=command,
            argv=list(argv or []),
            config=config or {},
            seed=seed,
            inputs=[os.fspath(p) for p in inputs or []],
            started_at=datetime.now(timezone.utc),
            app_version=settings.APP_VERSION,
        )
        self.report: Optional[Dict[str, Any]] = None

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.out_dir, MANIFEST_NAME)

    def add_outputs(self, paths: Sequence[str]) -> None:
        self.manifest.outputs.extend(os.fspath(p) for p in paths)

    def set_inputs(self, paths: Sequence[str]) -> None:
        self.manifest.inputs = [os.fspath(p) for p in paths]
        self.manifest.input_hash = content_hash(self.manifest.inputs)

    def set_extra(self, **values: Any) -> None:
        self.manifest.extra.update(values)

    def set_config(self, config: Dict[str, Any], seed: Optional[int] = None) -> None:
        self.manifest.config = config
        if seed is not None:
            self.manifest.seed = seed

    def progress(self, stage: str, message: str, level: str = "INFO") -> None:
        log_run_progress(self.run_id, stage, message, level)

    def __enter__(self) -> "RunTracker":
        os.makedirs(self.out_dir, exist_ok=True)
        if self.manifest.inputs:
            self.manifest.input_hash = content_hash(self.manifest.inputs)
        self._ledger_create()
        self.progress(self.command, f"🚀 started, outputs in {self.out_dir}")
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.manifest.finished_at = datetime.now(timezone.utc)
        if exc is None:
            self.manifest.status = RunStatus.COMPLETED
        else:
            self.manifest.status = RunStatus.FAILED
            self.manifest.error_code = exc.error_code if isinstance(exc, InfFusionError) else "INTERNAL_ERROR"
            self.manifest.error_message = str(exc)
        try:
            self._write_manifest()
        except OSError as e:
            log_error_with_context(e, {"run_id": self.run_id, "manifest": self.manifest_path})
        self._ledger_finish()
        if exc is None:
            self.progress(self.command, "✅ completed")
        else:
            self.progress(self.command, f"❌ failed: {self.manifest.error_code}: {exc}", "ERROR")
        return False

    def _write_manifest(self) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        with open(self.manifest_path, "wb") as fh:
            fh.write(orjson.dumps(self.manifest.model_dump(mode="json"),
                                  option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))

    def _ledger_create(self) -> None:
        if not settings.LEDGER_ENABLED:
            return
        try:
            from inffusion.db.repositories import RunRepository
            db = _ledger_session()
            try:
                repo = RunRepository(db)
                repo.create_run(self.run_id, self.command, self.manifest.seed, self.out_dir,
                                self.manifest.config)
                repo.update_run_status(self.run_id, RunStatus.RUNNING)
            finally:
                db.close()
        except Exception as e:
            # ledger trouble never fails a run
            log_error_with_context(e, {"run_id": self.run_id, "stage": "ledger_create"})

    def _ledger_finish(self) -> None:
        if not settings.LEDGER_ENABLED:
            return
        try:
            from inffusion.db.repositories import RunArtifactRepository, RunRepository
            db = _ledger_session()
            try:
                runs = RunRepository(db)
                runs.update_run_config(self.run_id, self.manifest.config, self.manifest.seed)
                runs.update_run_status(
                    self.run_id, self.manifest.status,
                    error_code=self.manifest.error_code, error_message=self.manifest.error_message,
                )
                RunArtifactRepository(db).create_artifact(
                    self.run_id, manifest=self.manifest.model_dump(mode="json"), report=self.report,
                )
            finally:
                db.close()
        except Exception as e:
            log_error_with_context(e, {"run_id": self.run_id, "stage": "ledger_finish"})


def read_manifest(out_dir: str) -> RunManifest:
    with open(os.path.join(out_dir, MANIFEST_NAME), "rb") as fh:
        return RunManifest.model_validate(orjson.loads(fh.read()))


def recent_runs(limit: int = 10) -> List[Dict[str, Any]]:
    """Newest runs from the ledger as plain dicts"""
    from inffusion.db.repositories import RunRepository
    db = _ledger_session()
    try:
        return [
            {
                "id": run.id,
                "command": run.command,
                "status": run.status.value,
                "seed": run.seed,
                "out_dir": run.out_dir,
                "created_at": run.created_at.isoformat() if run.created_at else None,
                "error_code": run.error_code,
            }
            for run in RunRepository(db).get_recent_runs(limit)
        ]
    finally:
        db.close()
