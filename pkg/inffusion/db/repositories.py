import time
from typing import Any, Dict, List, Optional

from sqlalchemy import desc
from sqlalchemy.orm import Session

from inffusion.db.models import Run, RunArtifact
from inffusion.schemas.reports import RunStatus
from inffusion.utils.logging import log_ledger_operation


class RunRepository:
    """Repository for run-related database operations"""

    def __init__(self, db: Session):
        self.db = db

    def create_run(self, run_id: str, command: str, seed: Optional[int] = None,
                   out_dir: Optional[str] = None, config: Optional[Dict[str, Any]] = None) -> Run:
        """Create a new run in the queued state"""
        started = time.perf_counter()
        run = Run(id=run_id, command=command, seed=seed, out_dir=out_dir,
                  config=config, status=RunStatus.QUEUED)
        self.db.add(run)
        self.db.commit()
        self.db.refresh(run)
        log_ledger_operation("create", "runs", run_id, time.perf_counter() - started)
        return run

    def get_run_by_id(self, run_id: str) -> Optional[Run]:
        """Get run by ID"""
        return self.db.query(Run).filter(Run.id == run_id).first()

    def update_run_status(self, run_id: str, status: RunStatus,
                          error_code: Optional[str] = None,
                          error_message: Optional[str] = None) -> bool:
        """Update run status"""
        started = time.perf_counter()
        run = self.get_run_by_id(run_id)
        if not run:
            return False
        run.status = status
        if error_code:
            run.error_code = error_code
        if error_message:
            run.error_message = error_message
        self.db.commit()
        log_ledger_operation(f"status={status.value}", "runs", run_id, time.perf_counter() - started)
        return True

    def update_run_config(self, run_id: str, config: Optional[Dict[str, Any]], seed: Optional[int] = None) -> bool:
        """Replace the stored config snapshot once it is resolved"""
        run = self.get_run_by_id(run_id)
        if not run:
            return False
        run.config = config
        if seed is not None:
            run.seed = seed
        self.db.commit()
        return True

    def get_recent_runs(self, limit: int = 10) -> List[Run]:
        """Get recent runs, newest first"""
        return self.db.query(Run).order_by(desc(Run.created_at), desc(Run.id)).limit(limit).all()


class RunArtifactRepository:
    """Repository for run artifact operations"""

    def __init__(self, db: Session):
        self.db = db

    def create_artifact(self, run_id: str, manifest: Optional[dict] = None,
                        report: Optional[dict] = None) -> RunArtifact:
        """Create run artifact"""
        started = time.perf_counter()
        artifact = RunArtifact(run_id=run_id, manifest=manifest, report=report)
        self.db.add(artifact)
        self.db.commit()
        self.db.refresh(artifact)
        log_ledger_operation("create", "run_artifacts", run_id, time.perf_counter() - started)
        return artifact

    def get_artifact_by_run_id(self, run_id: str) -> Optional[RunArtifact]:
        """Get artifact by run ID"""
        return self.db.query(RunArtifact).filter(RunArtifact.run_id == run_id).first()
