"""HTTP/JSON API over a frozen checkpoint: one endpoint per subtask.

Requests carry constraint specs with category names and bin-space numbers;
responses return layouts in the same bin-space element schema plus per-sample
flags. The model snapshot is immutable for the session's lifetime, every
request gets its own rng and FSM, and unpinned seeds draw from a per-request
counter so identical pinned requests replay exactly.
"""
from __future__ import annotations

import itertools
import json
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import Canvas, Element, InvalidInputError, Layout, QuantizedBox
from .model import TransformerModel
from .relations import RELATIONS, Relationship
from .sampling import SamplerConfig, generate
from .training import load_checkpoint_dir
from .vocab import CapacityError, ConstraintSpec, InvalidConstraintError, Task, Vocabulary


class RequestError(ValueError):
    """Maps straight to an HTTP status; ``field`` names the offending input."""

    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.field = field


@dataclass
class ApiSession:
    model: TransformerModel
    vocab: Vocabulary
    snapshot_id: str
    multi_task: bool = False
    default_seed: int = 0

    def __post_init__(self) -> None:
        self._counter = itertools.count(self.default_seed)
        self._lock = threading.Lock()

    def next_seed(self) -> int:
        with self._lock:
            return next(self._counter)


def build_session(checkpoint_dir: Path, default_seed: int = 0) -> ApiSession:
    model, vocab, meta = load_checkpoint_dir(checkpoint_dir)
    return ApiSession(
        model=model,
        vocab=vocab,
        snapshot_id=meta.get("snapshot_id") or uuid.uuid4().hex[:12],
        multi_task=bool(meta.get("multi_task", False)),
        default_seed=default_seed,
    )


def _expect(payload: dict, field: str, kind, required: bool = True):
    if field not in payload or payload[field] is None:
        if required:
            raise RequestError(400, f"missing field {field!r}", field)
        return None
    value = payload[field]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise RequestError(400, f"field {field!r} has the wrong type", field)
    return value


def _parse_layout(obj: Any, field: str, vocab: Vocabulary) -> Layout:
    if not isinstance(obj, dict) or not isinstance(obj.get("elements"), list):
        raise RequestError(400, f"field {field!r} must be a layout object", field)
    if not obj["elements"]:
        raise RequestError(400, f"field {field!r} needs at least one element", field)
    elements = []
    for i, e in enumerate(obj["elements"]):
        if not isinstance(e, dict):
            raise RequestError(400, f"{field}.elements[{i}] must be an object", field)
        name = e.get("category")
        if not isinstance(name, str):
            raise RequestError(400, f"{field}.elements[{i}].category must be a string", field)
        if name not in vocab.categories:
            raise RequestError(409, f"unknown category {name!r}", field)
        bbox = e.get("bbox")
        if (
            not isinstance(bbox, list)
            or len(bbox) != 4
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in bbox)
        ):
            raise RequestError(
                400, f"{field}.elements[{i}].bbox must be four integer bins", field
            )
        if not all(0 <= v < vocab.bins for v in bbox):
            raise RequestError(
                400, f"{field}.elements[{i}].bbox out of bin range [0, {vocab.bins - 1}]", field
            )
        elements.append(
            Element(vocab.categories.index(name), QuantizedBox(*bbox))
        )
    canvas = obj.get("canvas") or {}
    try:
        parsed_canvas = Canvas(float(canvas.get("w", 1.0)), float(canvas.get("h", 1.0)))
    except (TypeError, ValueError, InvalidInputError):
        raise RequestError(400, f"{field}.canvas must have positive w and h", field) from None
    return Layout(elements, canvas=parsed_canvas)


def parse_spec(task: Task, payload: dict, vocab: Vocabulary) -> ConstraintSpec:
    """Validate a wire-format constraint body into a ConstraintSpec.

    Raises RequestError with the HTTP status and offending field on bad input.
    """
    if not isinstance(payload, dict):
        raise RequestError(400, "request body must be a JSON object")
    if task is Task.UGEN:
        spec = ConstraintSpec(Task.UGEN)
    elif task in (Task.GEN_T, Task.GEN_TS, Task.GEN_R):
        types = _expect(payload, "types", list)
        if not types or not all(isinstance(t, str) for t in types):
            raise RequestError(400, "field 'types' must be a non-empty list of names", "types")
        for t in types:
            if t not in vocab.categories:
                raise RequestError(409, f"unknown category {t!r}", "types")
        if len(types) > vocab.max_elements:
            raise RequestError(
                422, f"{len(types)} types exceed the element capacity {vocab.max_elements}", "types"
            )
        if task is Task.GEN_T:
            spec = ConstraintSpec(task, types=tuple(types))
        elif task is Task.GEN_TS:
            sizes = _expect(payload, "sizes", list)
            if len(sizes) != len(types):
                raise RequestError(400, "field 'sizes' must align with 'types'", "sizes")
            parsed = []
            for i, pair in enumerate(sizes):
                if (
                    not isinstance(pair, list)
                    or len(pair) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair)
                    or not all(0 <= v < vocab.bins for v in pair)
                ):
                    raise RequestError(400, f"sizes[{i}] must be [w, h] bins", "sizes")
                parsed.append((pair[0], pair[1]))
            spec = ConstraintSpec(task, types=tuple(types), sizes=tuple(parsed))
        else:
            rels = _expect(payload, "relationships", list)
            parsed_rels = []
            for i, rel in enumerate(rels):
                if not isinstance(rel, dict):
                    raise RequestError(400, f"relationships[{i}] must be an object", "relationships")
                a, b, name = rel.get("a"), rel.get("b"), rel.get("relation")
                if not isinstance(a, int) or not isinstance(b, int) or isinstance(a, bool) or isinstance(b, bool):
                    raise RequestError(400, f"relationships[{i}].a/.b must be indices", "relationships")
                if name not in RELATIONS:
                    raise RequestError(
                        400, f"relationships[{i}].relation must be one of {list(RELATIONS)}", "relationships"
                    )
                if not (0 <= a < len(types) and 0 <= b < len(types)) or a == b:
                    raise RequestError(
                        422, f"relationships[{i}] indices must name two distinct types", "relationships"
                    )
                parsed_rels.append(Relationship(a, b, name))
            spec = ConstraintSpec(task, types=tuple(types), relationships=tuple(parsed_rels))
    elif task is Task.REFINEMENT:
        spec = ConstraintSpec(task, draft=_parse_layout(_expect(payload, "draft", dict), "draft", vocab))
    elif task is Task.COMPLETION:
        spec = ConstraintSpec(
            task, partial=_parse_layout(_expect(payload, "partial", dict), "partial", vocab)
        )
    else:  # pragma: no cover
        raise RequestError(400, f"unsupported task {task}")
    try:
        spec.validate(vocab)
    except CapacityError as exc:
        raise RequestError(422, str(exc)) from exc
    except (InvalidConstraintError, InvalidInputError) as exc:
        raise RequestError(400, str(exc)) from exc
    return spec


def _sampler_from(payload: dict, task: Task, session: ApiSession) -> SamplerConfig:
    strategy = payload.get("strategy", "greedy" if task is Task.REFINEMENT else "top_k")
    if strategy not in ("greedy", "top_k"):
        raise RequestError(400, "field 'strategy' must be 'greedy' or 'top_k'", "strategy")
    k = payload.get("k", 10)
    temperature = payload.get("temperature", 0.5)
    use_fsm = payload.get("use_fsm", True)
    seed = payload.get("seed")
    if seed is None:
        seed = session.next_seed()
    if not isinstance(use_fsm, bool):
        raise RequestError(400, "field 'use_fsm' must be boolean", "use_fsm")
    try:
        return SamplerConfig(
            strategy=strategy, k=int(k), temperature=float(temperature),
            use_fsm=use_fsm, seed=int(seed),
        )
    except (TypeError, ValueError) as exc:
        raise RequestError(400, f"bad sampler settings: {exc}") from exc


def _layout_wire(layout: Layout, vocab: Vocabulary) -> dict:
    return {
        "canvas": {"w": layout.canvas.width, "h": layout.canvas.height},
        "elements": [
            {
                "category": vocab.categories.name(e.category),
                "bbox": [e.box.x, e.box.y, e.box.w, e.box.h],
            }
            for e in layout.elements
        ],
    }


def create_app(session: ApiSession) -> FastAPI:
    app = FastAPI(title="unilayout", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    vocab = session.vocab

    @app.exception_handler(RequestError)
    async def handle_request_error(_request: Request, exc: RequestError):
        body = {"error": str(exc)}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(Exception)
    async def handle_internal(_request: Request, exc: Exception):
        incident = uuid.uuid4().hex[:12]
        return JSONResponse(status_code=500, content={"error": "internal failure", "id": incident})

    @app.get("/meta")
    def meta() -> dict:
        return {
            "snapshot_id": session.snapshot_id,
            "categories": list(vocab.categories.names),
            "background": sorted(vocab.categories.background_labels),
            "bins": vocab.bins,
            "max_elements": vocab.max_elements,
            "multi_task": session.multi_task,
            "model": session.model.config.to_dict(),
            "tasks": [t.value for t in Task],
        }

    async def _payload(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise RequestError(400, f"body is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            raise RequestError(400, "request body must be a JSON object")
        return payload

    def _run(task: Task, payload: dict) -> dict:
        spec = parse_spec(task, payload, vocab)
        n = payload.get("n", 1)
        if not isinstance(n, int) or isinstance(n, bool) or not 1 <= n <= 64:
            raise RequestError(400, "field 'n' must be an integer in [1, 64]", "n")
        sampler = _sampler_from(payload, task, session)
        results = generate(
            session.model, spec, sampler, n, vocab, with_prefix=session.multi_task
        )
        return {
            "snapshot_id": session.snapshot_id,
            "seed": sampler.seed,
            "layouts": [
                _layout_wire(r.layout, vocab) if r.layout else None for r in results
            ],
            "flags": [
                {
                    "flagged": r.flagged,
                    "violations": list(r.violations),
                    "error": r.error,
                }
                for r in results
            ],
        }

    @app.post("/generate/ugen")
    async def generate_ugen(request: Request) -> dict:
        return _run(Task.UGEN, await _payload(request))

    @app.post("/generate/gen-t")
    async def generate_gen_t(request: Request) -> dict:
        return _run(Task.GEN_T, await _payload(request))

    @app.post("/generate/gen-ts")
    async def generate_gen_ts(request: Request) -> dict:
        return _run(Task.GEN_TS, await _payload(request))

    @app.post("/generate/gen-r")
    async def generate_gen_r(request: Request) -> dict:
        return _run(Task.GEN_R, await _payload(request))

    @app.post("/refine")
    async def refine_endpoint(request: Request) -> dict:
        return _run(Task.REFINEMENT, await _payload(request))

    @app.post("/complete")
    async def complete_endpoint(request: Request) -> dict:
        return _run(Task.COMPLETION, await _payload(request))

    return app
