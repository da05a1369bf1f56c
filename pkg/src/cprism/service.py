"""Session-oriented HTTP/JSON service exposing the full pipeline.

Sessions are in-memory: each holds an ingested dataset, its atom schema and
matrix, a globally fitted propensity model, a subgroup store, and at most one
running discovery job. Reads are concurrent; store mutations and job starts
are serialized per session. Discovery runs on a background thread and is
cancellable between generations. All errors are JSON objects of the shape
``{"error": code, "message": text}``.
"""

from __future__ import annotations

import json
import math
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Form, Query, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .dataset import (
    AtomSchema,
    BinaryAtomMatrix,
    CprismError,
    ObservationalDataset,
    Subgroup,
    SubgroupError,
    all_units_subgroup,
    binarize,
    covariate_distribution,
    cover_mask_bool,
    ingest_csv,
    merge_subgroups,
    split_subgroup,
    subgroup_from_json,
    subgroup_to_json,
)
from .discovery import DiscoveryError, ParetoResult, SearchParams, discover
from .estimators import (
    EffectNotIdentifiable,
    PropensityModel,
    SubgroupMetrics,
    evaluate_subgroup,
)
from .matching import MatchingError, build_match_report
from .projection import project_dataset


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _finite(x: float) -> Optional[float]:
    return None if x is None or not math.isfinite(x) else float(x)


@dataclass
class StoredSubgroup:
    subgroup: Subgroup
    metrics: SubgroupMetrics
    objectives: Optional[tuple[float, ...]] = None
    crowding: Optional[float] = None
    front: Optional[int] = None  # 1-based; None for user-created subgroups

    def to_json(self, schema: AtomSchema) -> dict:
        doc = subgroup_to_json(self.subgroup, schema)
        doc["metrics"] = self.metrics.to_json()
        doc["objectives"] = (
            None if self.objectives is None else [_finite(v) for v in self.objectives]
        )
        doc["crowding"] = None if self.crowding is None else _finite(self.crowding)
        doc["front"] = self.front
        return doc


@dataclass
class Job:
    id: str
    status: str = "running"  # running | done | cancelled | failed
    generation: int = 0
    error: Optional[str] = None
    result: Optional[ParetoResult] = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    thread: Optional[threading.Thread] = None


class Session:
    def __init__(
        self,
        session_id: str,
        dataset: ObservationalDataset,
        schema: AtomSchema,
        matrix: BinaryAtomMatrix,
        model: PropensityModel,
        config: dict,
    ):
        self.id = session_id
        self.dataset = dataset
        self.schema = schema
        self.matrix = matrix
        self.model = model
        self.config = config
        self.subgroups: dict[str, StoredSubgroup] = {}
        self.jobs: dict[str, Job] = {}
        self.lock = threading.Lock()
        self.counter = 0
        self._projection_cache: Optional[dict] = None

    def next_id(self, prefix: str) -> str:
        with self.lock:
            self.counter += 1
            return f"{prefix}{self.counter}"

    def running_job(self) -> Optional[Job]:
        for job in self.jobs.values():
            if job.status == "running":
                return job
        return None

    def min_group(self) -> int:
        return int(self.config.get("min_group", 10))


def create_app(snapshot_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="cprism", version=__version__)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    snap_path = Path(snapshot_dir) if snapshot_dir else None
    if snap_path:
        snap_path.mkdir(parents=True, exist_ok=True)
        for file in sorted(snap_path.glob("*.json")):
            session = _load_snapshot(file)
            if session is not None:
                sessions[session.id] = session

    # -- error shaping ------------------------------------------------------

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.code, "message": exc.message}
        )

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(_req: Request, exc: StarletteHTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": "http_error", "message": str(exc.detail)},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422, content={"error": "invalid_request", "message": str(exc.errors())}
        )

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def save_snapshot(session: Session) -> None:
        if snap_path is None:
            return
        _write_snapshot(snap_path / f"{session.id}.json", session)

    # -- sessions -----------------------------------------------------------

    @app.post("/sessions", status_code=200)
    async def create_session(
        file: UploadFile = File(...), config: str = Form(...)
    ):
        try:
            cfg = json.loads(config)
        except json.JSONDecodeError as exc:
            raise ApiError(400, "bad_config", f"config is not valid JSON: {exc}")
        payload = await file.read()
        try:
            dataset = ingest_csv(payload, _ingest_config(cfg))
            schema, matrix = binarize(dataset, bucket_count=int(cfg.get("buckets", 4)))
            model = _fit_model(dataset, matrix, cfg)
        except CprismError as exc:
            raise ApiError(400, "ingest_error", str(exc))
        session_id = secrets.token_hex(8)
        session = Session(session_id, dataset, schema, matrix, model, cfg)
        with registry_lock:
            sessions[session_id] = session
        save_snapshot(session)
        return _session_summary(session)

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        return _session_summary(get_session(session_id))

    # -- discovery jobs -----------------------------------------------------

    @app.post("/sessions/{session_id}/discover")
    def start_discover(session_id: str, params: dict):
        session = get_session(session_id)
        with session.lock:
            if session.running_job() is not None:
                raise ApiError(409, "job_running", "a discovery job is already running")
            try:
                search = SearchParams.from_json(params)
                search.validate()
                search.resolve_coverage(session.matrix.n)
            except (DiscoveryError, TypeError, ValueError) as exc:
                raise ApiError(400, "bad_params", str(exc))
            job = Job(id=secrets.token_hex(8))
            session.jobs[job.id] = job
        job.thread = threading.Thread(
            target=_run_job, args=(session, job, search, save_snapshot), daemon=True
        )
        job.thread.start()
        return {"job_id": job.id}

    @app.get("/sessions/{session_id}/jobs/{job_id}")
    def job_status(session_id: str, job_id: str):
        session = get_session(session_id)
        job = session.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job {job_id!r}")
        doc = {"status": job.status, "generation": job.generation}
        if job.status == "failed":
            doc["error"] = job.error
        if job.status == "done" and job.result is not None:
            doc["front"] = [
                entry.to_json(session.schema)
                for entry in _stored_entries(session)
                if entry.front == 1
            ]
        return doc

    @app.delete("/sessions/{session_id}/jobs/{job_id}")
    def cancel_job(session_id: str, job_id: str):
        session = get_session(session_id)
        job = session.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job {job_id!r}")
        if job.status != "running":
            raise ApiError(409, "not_running", f"job is {job.status}")
        job.cancel_event.set()
        if job.thread is not None:
            job.thread.join(timeout=30)
        return {"status": job.status, "generation": job.generation}

    # -- subgroup store -----------------------------------------------------

    @app.get("/sessions/{session_id}/subgroups")
    def list_subgroups(session_id: str, fronts: Optional[str] = Query(default=None)):
        session = get_session(session_id)
        entries = _stored_entries(session)
        if fronts != "all":
            entries = [e for e in entries if e.front in (None, 1)]
        return {"subgroups": [e.to_json(session.schema) for e in entries]}

    @app.post("/sessions/{session_id}/subgroups")
    def add_subgroup(session_id: str, doc: dict):
        session = get_session(session_id)
        try:
            subgroup, notes = subgroup_from_json(doc, session.schema)
        except SubgroupError as exc:
            raise ApiError(422, "bad_subgroup", str(exc))
        with session.lock:
            if subgroup.id in session.subgroups:
                raise ApiError(409, "duplicate_id", f"subgroup id {subgroup.id!r} exists")
        entry = _evaluate_stored(session, subgroup)
        with session.lock:
            session.subgroups[subgroup.id] = entry
        save_snapshot(session)
        doc = entry.to_json(session.schema)
        doc["snapped"] = notes
        return doc

    @app.post("/sessions/{session_id}/subgroups/merge")
    def merge(session_id: str, body: dict):
        session = get_session(session_id)
        for key in ("a", "b"):
            if key not in body:
                raise ApiError(422, "bad_request", "merge expects subgroup ids 'a' and 'b'")
        a = _get_subgroup(session, str(body["a"]))
        b = _get_subgroup(session, str(body["b"]))
        try:
            merged = merge_subgroups(
                a.subgroup, b.subgroup, session.schema, new_id=session.next_id("m")
            )
        except SubgroupError as exc:
            raise ApiError(422, "merge_failed", str(exc))
        entry = _evaluate_stored(session, merged)
        with session.lock:
            session.subgroups[merged.id] = entry
        save_snapshot(session)
        return entry.to_json(session.schema)

    @app.post("/sessions/{session_id}/subgroups/{sid}/split")
    def split(session_id: str, sid: str, body: dict):
        session = get_session(session_id)
        stored = _get_subgroup(session, sid)
        covariate = body.get("covariate")
        if not covariate:
            raise ApiError(422, "bad_request", "split expects a 'covariate' name")
        base = session.next_id("s")
        try:
            left, right = split_subgroup(
                stored.subgroup, covariate, session.schema, new_ids=(f"{base}a", f"{base}b")
            )
        except SubgroupError as exc:
            raise ApiError(422, "split_failed", str(exc))
        entries = [_evaluate_stored(session, sg) for sg in (left, right)]
        with session.lock:
            for entry in entries:
                session.subgroups[entry.subgroup.id] = entry
        save_snapshot(session)
        return {"subgroups": [e.to_json(session.schema) for e in entries]}

    # -- explainers ---------------------------------------------------------

    @app.get("/sessions/{session_id}/subgroups/{sid}/match")
    def match(session_id: str, sid: str, epsilon: float = Query(default=0.1, gt=0.0, le=1.0)):
        session = get_session(session_id)
        stored = _get_subgroup(session, sid)
        try:
            report = build_match_report(
                stored.subgroup, session.dataset, session.matrix, session.model,
                epsilon=epsilon,
            )
        except MatchingError as exc:
            raise ApiError(422, "match_failed", str(exc))
        return report.to_json()

    @app.get("/sessions/{session_id}/subgroups/{sid}/units")
    def matched_units(
        session_id: str,
        sid: str,
        limit: int = Query(default=100, ge=1, le=10000),
        offset: int = Query(default=0, ge=0),
        epsilon: float = Query(default=0.1, gt=0.0, le=1.0),
    ):
        session = get_session(session_id)
        stored = _get_subgroup(session, sid)
        try:
            report = build_match_report(
                stored.subgroup, session.dataset, session.matrix, session.model,
                epsilon=epsilon,
            )
        except MatchingError as exc:
            raise ApiError(422, "match_failed", str(exc))
        id_to_pos = {int(uid): pos for pos, uid in enumerate(session.dataset.unit_ids)}
        rows = []
        for pair_index, pair in enumerate(report.pairs):
            for uid in (pair.treated_id, pair.control_id):
                pos = id_to_pos[uid]
                rows.append(
                    {
                        "id": uid,
                        "e": float(session.model.scores[pos]),
                        "t": int(session.dataset.treatment[pos]),
                        "y": float(session.dataset.outcome[pos]),
                        "pair": pair_index,
                        "covariates": {
                            name: _cell(session.dataset, name, pos)
                            for name in session.dataset.covariate_names
                        },
                    }
                )
        return {"total": len(rows), "units": rows[offset : offset + limit]}

    @app.get("/sessions/{session_id}/projection")
    def projection(session_id: str):
        session = get_session(session_id)
        with session.lock:
            cached = session._projection_cache
        if cached is None:
            cached = project_dataset(session.dataset, member_masks={})
            with session.lock:
                session._projection_cache = cached
        masks = {
            entry.subgroup.id: cover_mask_bool(entry.subgroup, session.matrix)
            for entry in _stored_entries(session)
            if entry.front in (None, 1)
        }
        id_to_pos = {int(uid): pos for pos, uid in enumerate(session.dataset.unit_ids)}
        points = []
        for point in cached["points"]:
            pos = id_to_pos[point["id"]]
            points.append(
                {
                    "id": point["id"],
                    "x": point["x"],
                    "y": point["y"],
                    "subgroups": [sid for sid, mask in masks.items() if bool(mask[pos])],
                }
            )
        return {"points": points, "stress": cached["stress"]}

    @app.get("/sessions/{session_id}/covariates/{name}/distribution")
    def distribution(session_id: str, name: str):
        session = get_session(session_id)
        if name not in session.dataset.covariate_names:
            raise ApiError(404, "unknown_covariate", f"no covariate {name!r}")
        return covariate_distribution(session.dataset, name)

    return app


# ---------------------------------------------------------------------------
# helpers shared by routes
# ---------------------------------------------------------------------------


def _ingest_config(cfg: dict) -> dict:
    allowed = {"treatment", "outcome", "positive_value", "buckets", "types"}
    return {k: v for k, v in cfg.items() if k in allowed}


def _fit_model(dataset, matrix, cfg) -> PropensityModel:
    from .estimators import fit_propensity

    return fit_propensity(
        dataset,
        matrix,
        l2=float(cfg.get("l2", 1e-4)),
        max_iter=int(cfg.get("max_iter", 200)),
    )


def _cell(dataset, name, pos):
    value = dataset.columns[name][pos]
    return float(value) if dataset.kind_of(name) == "numerical" else str(value)


def _session_summary(session: Session) -> dict:
    return {
        "session_id": session.id,
        "n": session.dataset.n,
        "covariates": [
            {"name": spec.name, "kind": spec.kind} for spec in session.dataset.schema
        ],
        "atoms": [
            {
                "covariate": atom.covariate,
                "op": atom.op,
                "value": atom.value
                if atom.op == "eq"
                else [_finite(atom.lo), _finite(atom.hi)],
            }
            for atom in session.schema.atoms
        ],
        "treatment": session.dataset.treatment_name,
        "outcome": session.dataset.outcome_name,
    }


def _stored_entries(session: Session) -> list[StoredSubgroup]:
    entries = list(session.subgroups.values())
    entries.sort(key=lambda e: (e.front if e.front is not None else 10**9, e.subgroup.id))
    return entries


def _get_subgroup(session: Session, sid: str) -> StoredSubgroup:
    if sid == "ALL" and sid not in session.subgroups:
        subgroup = all_units_subgroup(session.schema.d)
        return _evaluate_stored(session, subgroup)
    stored = session.subgroups.get(sid)
    if stored is None:
        raise ApiError(404, "unknown_subgroup", f"no subgroup {sid!r}")
    return stored


def _evaluate_stored(session: Session, subgroup: Subgroup) -> StoredSubgroup:
    try:
        metrics = evaluate_subgroup(
            subgroup,
            session.dataset,
            session.matrix,
            session.model,
            min_group=session.min_group(),
        )
    except EffectNotIdentifiable as exc:
        raise ApiError(422, "not_identifiable", str(exc))
    return StoredSubgroup(subgroup=subgroup, metrics=metrics)


def _run_job(session: Session, job: Job, params: SearchParams, save_snapshot) -> None:
    def progress(gen: int) -> None:
        job.generation = gen

    try:
        result = discover(
            session.dataset,
            session.matrix,
            session.model,
            params,
            progress=progress,
            should_stop=job.cancel_event.is_set,
        )
    except CprismError as exc:
        job.error = str(exc)
        job.status = "failed"
        return
    if result.stop_reason == "cancelled":
        job.status = "cancelled"
        return
    with session.lock:
        session.subgroups = {
            sid: entry
            for sid, entry in session.subgroups.items()
            if entry.front is None
        }
        for front_index, front in enumerate(result.fronts, start=1):
            for member in front:
                session.subgroups[member.subgroup.id] = StoredSubgroup(
                    subgroup=member.subgroup,
                    metrics=member.metrics,
                    objectives=member.objectives,
                    crowding=member.crowding,
                    front=front_index,
                )
        job.result = result
        job.status = "done"
    save_snapshot(session)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def _write_snapshot(path: Path, session: Session) -> None:
    dataset = session.dataset
    doc = {
        "session_id": session.id,
        "config": session.config,
        "dataset": {
            "schema": [{"name": s.name, "kind": s.kind} for s in dataset.schema],
            "columns": {
                name: (col.tolist() if dataset.kind_of(name) == "numerical"
                       else [str(v) for v in col])
                for name, col in dataset.columns.items()
            },
            "treatment": dataset.treatment.tolist(),
            "outcome": dataset.outcome.tolist(),
            "treatment_name": dataset.treatment_name,
            "outcome_name": dataset.outcome_name,
            "unit_ids": dataset.unit_ids.tolist(),
        },
        "subgroups": [
            {
                "doc": subgroup_to_json(entry.subgroup, session.schema),
                "front": entry.front,
                "crowding": _finite(entry.crowding) if entry.crowding is not None else None,
                "objectives": None
                if entry.objectives is None
                else [_finite(v) for v in entry.objectives],
            }
            for entry in _stored_entries(session)
        ],
        "counter": session.counter,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)


def _load_snapshot(path: Path) -> Optional[Session]:
    try:
        doc = json.loads(path.read_text())
        from .dataset import CovariateSpec

        raw = doc["dataset"]
        schema_specs = [CovariateSpec(name=s["name"], kind=s["kind"]) for s in raw["schema"]]
        columns = {}
        for spec in schema_specs:
            data = raw["columns"][spec.name]
            columns[spec.name] = (
                np.asarray(data, dtype=np.float64)
                if spec.kind == "numerical"
                else np.asarray([str(v) for v in data], dtype=object)
            )
        dataset = ObservationalDataset(
            schema=schema_specs,
            columns=columns,
            treatment=np.asarray(raw["treatment"], dtype=np.uint8),
            outcome=np.asarray(raw["outcome"], dtype=np.float64),
            treatment_name=raw["treatment_name"],
            outcome_name=raw["outcome_name"],
            unit_ids=np.asarray(raw["unit_ids"], dtype=np.int64),
        )
        cfg = doc.get("config", {})
        schema, matrix = binarize(dataset, bucket_count=int(cfg.get("buckets", 4)))
        model = _fit_model(dataset, matrix, cfg)
        session = Session(doc["session_id"], dataset, schema, matrix, model, cfg)
        session.counter = int(doc.get("counter", 0))
        for item in doc.get("subgroups", []):
            subgroup, _ = subgroup_from_json(item["doc"], schema)
            try:
                entry = _evaluate_stored(session, subgroup)
            except ApiError:
                continue
            entry.front = item.get("front")
            entry.crowding = item.get("crowding")
            entry.objectives = (
                None if item.get("objectives") is None else tuple(item["objectives"])
            )
            session.subgroups[subgroup.id] = entry
        return session
    except Exception:
        return None
