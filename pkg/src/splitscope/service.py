"""HTTP/JSON service consumed by the explorer UI.

One dataset per process; concurrent sessions are identified by the
``X-Session-Token`` header and each serialize their own mutations. Optimizer
jobs run on background threads and are polled by id.
"""

from __future__ import annotations

import threading
import uuid
from typing import Optional

from fastapi import Body, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from . import splits
from .coverage import coverage_report, report_to_json_dict
from .model import Dataset, SetLabel, SplitAssignment
from .optimizer import Objective, SearchConfig, objective_from_json_dict, optimize
from .session import Session
from .stats import CriteriaError
from .viewmodel import criteria_from_json_dict

DEFAULT_SESSION = "default"


class OptimizeJob:
    def __init__(self, dataset: Dataset, config: SearchConfig, objective: Objective,
                 initial: Optional[SplitAssignment]):
        self.id = uuid.uuid4().hex
        self.status = "running"
        self.steps = 0
        self.result: Optional[dict] = None
        self.error: Optional[str] = None
        self._thread = threading.Thread(
            target=self._run, args=(dataset, config, objective, initial), daemon=True
        )

    def start(self) -> None:
        self._thread.start()

    def _count_step(self, _membership) -> None:
        self.steps += 1

    def _run(self, dataset, config, objective, initial) -> None:
        try:
            result = optimize(dataset, config, objective, initial, _observer=self._count_step)
            self.result = {
                "assignment": splits.assignment_to_json_dict(result.assignment),
                "score": result.score,
                "trace": [[e, s] for e, s in result.trace],
                "evaluations": result.evaluations,
                "restarts_completed": result.restarts_completed,
            }
            self.status = "done"
        except Exception as exc:  # surfaced to the polling client
            self.error = str(exc)
            self.status = "error"

    @property
    def running(self) -> bool:
        return self.status == "running"


def _parse_sizes(value) -> dict[SetLabel, int]:
    if isinstance(value, str):
        parts = value.split("/")
        if len(parts) != 3:
            raise ValueError(f"sizes string must look like '32/8/40', got {value!r}")
        train, val, test = (0 if p.strip() == "-" else int(p) for p in parts)
        sizes = {SetLabel.TRAIN: train, SetLabel.TEST: test}
        if val:
            sizes[SetLabel.VAL] = val
        return sizes
    if isinstance(value, dict):
        sizes = {}
        for key, count in value.items():
            sizes[SetLabel(key)] = int(count)
        return sizes
    raise ValueError("sizes must be a '32/8/40' string or a {set: count} object")


def create_app(dataset: Dataset, initial_assignment: SplitAssignment) -> FastAPI:
    app = FastAPI(title="splitscope")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    sessions: dict[str, Session] = {}
    jobs: dict[str, OptimizeJob] = {}
    session_jobs: dict[str, str] = {}
    registry_lock = threading.Lock()

    def get_session(token: Optional[str]) -> Session:
        key = token or DEFAULT_SESSION
        with registry_lock:
            if key not in sessions:
                sessions[key] = Session(dataset, initial_assignment)
            return sessions[key]

    def bad_request(violations: list[str]) -> HTTPException:
        return HTTPException(status_code=400, detail={"violations": violations})

    @app.get("/api/viewmodel")
    def get_viewmodel(x_session_token: Optional[str] = Header(default=None)):
        return get_session(x_session_token).view_model()

    @app.get("/api/coverage")
    def get_coverage(x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        with session.lock:
            return report_to_json_dict(coverage_report(dataset, session.assignment))

    @app.get("/api/presets")
    def get_presets():
        return {
            "presets": [
                {
                    "name": p.name,
                    "has_validation": p.has_validation,
                    "train": list(p.train),
                    "val": list(p.val),
                    "test": list(p.test),
                }
                for p in splits.PRESETS.values()
            ]
        }

    @app.put("/api/split")
    def put_split(payload: dict = Body(...), x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        if "preset" in payload:
            name = payload["preset"]
            if name not in splits.PRESETS:
                raise HTTPException(status_code=404, detail=f"unknown preset {name!r}")
            assignment = splits.preset(name)
        else:
            assignment, violations = splits.assignment_from_json_dict(payload)
            if assignment is None:
                raise bad_request(violations)
        violations = session.put_assignment(assignment)
        if violations:
            raise bad_request(violations)
        return session.view_model()

    @app.post("/api/split/reassign")
    def post_reassign(payload: dict = Body(...), x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        surgery_id = payload.get("surgery_id")
        set_name = payload.get("set")
        try:
            target = SetLabel(set_name)
        except ValueError:
            raise bad_request([f"unknown set {set_name!r}"]) from None
        if surgery_id not in session.assignment.assignments:
            raise HTTPException(status_code=404, detail=f"unknown surgery {surgery_id!r}")
        try:
            session.reassign(surgery_id, target)
        except ValueError as exc:
            raise bad_request([str(exc)]) from None
        return session.view_model()

    @app.post("/api/split/undo")
    def post_undo(x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        changed = session.undo()
        vm = session.view_model()
        vm["changed"] = changed
        return vm

    @app.post("/api/split/redo")
    def post_redo(x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        changed = session.redo()
        vm = session.view_model()
        vm["changed"] = changed
        return vm

    @app.post("/api/filter")
    def post_filter(payload: dict = Body(...), x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        try:
            criteria = criteria_from_json_dict(payload)
            session.set_filter(criteria)
        except (CriteriaError, ValueError) as exc:
            raise bad_request([str(exc)]) from None
        return session.view_model()

    @app.delete("/api/filter")
    def delete_filter(x_session_token: Optional[str] = Header(default=None)):
        session = get_session(x_session_token)
        session.clear_filter()
        return session.view_model()

    @app.post("/api/optimize")
    def post_optimize(payload: dict = Body(...), x_session_token: Optional[str] = Header(default=None)):
        token = x_session_token or DEFAULT_SESSION
        session = get_session(x_session_token)
        with registry_lock:
            running = session_jobs.get(token)
            if running and jobs[running].running:
                raise HTTPException(status_code=409, detail=f"optimize job {running} still running")
        try:
            sizes = _parse_sizes(payload.get("sizes"))
            config = SearchConfig(
                sizes=sizes,
                seed=int(payload.get("seed", 0)),
                budget=int(payload.get("budget", 5000)),
                restarts=int(payload.get("restarts", 1)),
            )
            objective = objective_from_json_dict(payload.get("objective") or {})
            initial = None
            if payload.get("from_current"):
                with session.lock:
                    initial = session.assignment
        except (ValueError, KeyError) as exc:
            raise bad_request([str(exc)]) from None
        job = OptimizeJob(dataset, config, objective, initial)
        with registry_lock:
            jobs[job.id] = job
            session_jobs[token] = job.id
        job.start()
        return {"job_id": job.id}

    @app.get("/api/optimize/{job_id}")
    def get_optimize(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        body = {"job_id": job.id, "status": job.status, "steps": job.steps}
        if job.status == "done":
            body["result"] = job.result
        elif job.status == "error":
            body["error"] = job.error
        return body

    return app
