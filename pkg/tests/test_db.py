import os

import pytest

from inffusion.db.base import create_tables, get_db_session
from inffusion.db.repositories import RunArtifactRepository, RunRepository
from inffusion.errors import ShapeError
from inffusion.schemas.reports import RunStatus
from inffusion.services.run_service import MANIFEST_NAME, RunTracker, read_manifest, recent_runs
from inffusion.utils.id_gen import content_hash, generate_id


@pytest.fixture
def db():
    create_tables()
    session = get_db_session()
    yield session
    session.close()


class TestRepositories:
    def test_run_lifecycle(self, db):
        runs = RunRepository(db)
        run_id = generate_id()
        run = runs.create_run(run_id, "train", seed=3, out_dir="/tmp/x", config={"lr": 1e-4})
        assert run.status is RunStatus.QUEUED
        assert runs.update_run_status(run_id, RunStatus.FAILED, error_code="IO_ERROR", error_message="boom")
        assert runs.update_run_config(run_id, {"lr": 1e-3}, seed=4)
        stored = runs.get_run_by_id(run_id)
        assert stored.status is RunStatus.FAILED
        assert stored.error_code == "IO_ERROR"
        assert stored.config == {"lr": 1e-3} and stored.seed == 4

    def test_unknown_run(self, db):
        runs = RunRepository(db)
        assert runs.get_run_by_id("missing") is None
        assert not runs.update_run_status("missing", RunStatus.COMPLETED)
        assert not runs.update_run_config("missing", {})

    def test_artifacts(self, db):
        run_id = generate_id()
        RunArtifactRepository(db).create_artifact(run_id, manifest={"command": "eval"}, report={"PSNR": 40.0})
        artifact = RunArtifactRepository(db).get_artifact_by_run_id(run_id)
        assert artifact.report == {"PSNR": 40.0}


class TestRunTracker:
    def test_completed_run(self, tmp_path, db):
        with RunTracker("simulate", str(tmp_path), ["simulate"], {"scale": 4}, seed=1) as run:
            run.add_outputs([tmp_path / "a.cube"])
            run.set_extra(samples=1)
            run.report = {"ok": True}
        manifest = read_manifest(str(tmp_path))
        assert manifest.status is RunStatus.COMPLETED
        assert manifest.outputs == [str(tmp_path / "a.cube")]
        assert manifest.finished_at >= manifest.started_at
        stored = RunRepository(db).get_run_by_id(run.run_id)
        assert stored.status is RunStatus.COMPLETED
        assert RunArtifactRepository(db).get_artifact_by_run_id(run.run_id).report == {"ok": True}

    def test_failed_run_writes_manifest_and_reraises(self, tmp_path, db):
        out = tmp_path / "nested" / "out"
        with pytest.raises(ShapeError):
            with RunTracker("eval", str(out)) as run:
                raise ShapeError("bands differ", axis="S")
        assert os.listdir(out) == [MANIFEST_NAME]
        manifest = read_manifest(str(out))
        assert manifest.status is RunStatus.FAILED
        assert manifest.error_code == "SHAPE_MISMATCH"
        assert manifest.error_message == "bands differ"
        assert RunRepository(db).get_run_by_id(run.run_id).error_code == "SHAPE_MISMATCH"

    def test_unexpected_error_code(self, tmp_path):
        with pytest.raises(RuntimeError):
            with RunTracker("train", str(tmp_path)):
                raise RuntimeError("oops")
        assert read_manifest(str(tmp_path)).error_code == "INTERNAL_ERROR"

    def test_config_resolved_later(self, tmp_path, db):
        with RunTracker("train", str(tmp_path)) as run:
            run.set_config({"lr": 0.5}, seed=9)
            run.set_inputs([str(tmp_path / "x.cube")])
        manifest = read_manifest(str(tmp_path))
        assert manifest.seed == 9 and manifest.config == {"lr": 0.5}
        assert manifest.input_hash == content_hash([str(tmp_path / "x.cube")])
        assert RunRepository(db).get_run_by_id(run.run_id).seed == 9

    def test_recent_runs(self, tmp_path):
        with RunTracker("ablate", str(tmp_path)) as run:
            pass
        ids = [r["id"] for r in recent_runs(limit=1000)]
        assert run.run_id in ids
        row = next(r for r in recent_runs(limit=1000) if r["id"] == run.run_id)
        assert row["status"] == "completed" and row["command"] == "ablate"
