"""Stateless HTTP facade over the core package.

Every endpoint takes and returns JSON bodies; instance documents travel
inline (the service never touches the filesystem), so the CLI and remote
clients behave identically.
"""

from __future__ import annotations

import math
from typing import Any, Literal

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .fileio import FileFormatError, document_to_instance, instance_to_document, parse_plan, trace_to_csv
from .generators import grid_instance
from .methods import ALL_METHODS, MethodOptions, SolveReport, UnknownMethodError, evaluate_plan, plan_text, run_method
from .milp import ModelError
from .model import DimensionError, validate_instance
from .oracle import BudgetExceededError
from .targets import PathExplosionError, enumerate_paths, sample_paths


class GenerateRequest(BaseModel):
    grid_side: int = Field(ge=3)
    searchers: int = Field(ge=1)
    horizon: int = Field(ge=1)
    camouflage: bool = False
    two_class: bool = False
    entry_mode: Literal["corner", "single"] = "corner"
    terminal_row: bool | None = None
    endurance: list[int] | None = None
    class_weights: list[int] | None = None
    quality_split: bool = False
    name: str | None = None


class InstanceResponse(BaseModel):
    instance: dict


class ValidateRequest(BaseModel):
    instance: dict


class ValidateResponse(BaseModel):
    violations: list[dict]


class PathsRequest(BaseModel):
    instance: dict
    mode: Literal["sample", "enumerate"] = "sample"
    count: int = Field(default=1000, ge=1)
    seed: int = 0
    prob_floor: float = Field(default=0.0, ge=0.0)
    cap: int = Field(default=1_000_000, ge=1)


class ControlsBody(BaseModel):
    gap: float = Field(default=1e-4, ge=0.0)
    time_limit: float = Field(default=900.0, gt=0.0)
    delta: float | None = None
    iteration_cap: int = Field(default=200, ge=1)


class SolveRequest(BaseModel):
    instance: dict
    method: str
    controls: ControlsBody = ControlsBody()
    seed: int | None = None
    sample_count: int | None = Field(default=None, ge=1)
    binary_levels: bool = False
    upsilon: int | None = Field(default=None, ge=1)
    band: tuple[int, int] | None = None
    oracle_budget: int = Field(default=10_000_000, ge=1)


class SolveResponse(BaseModel):
    record: dict
    plan: str
    trace_csv: str


class EvaluateRequest(BaseModel):
    instance: dict
    plan: str


class EvaluateResponse(BaseModel):
    feasible: bool
    violations: list[dict]
    non_detection: float
    detection: float


def _load_instance(doc: dict, structural_check: bool = False):
    try:
        inst = document_to_instance(doc)
    except FileFormatError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    if structural_check:
        # floor-truncated path sets legitimately carry mass below one; every
        # other violation means the document cannot be solved against
        fatal = [v for v in validate_instance(inst) if "q mass" not in v.message]
        if fatal:
            raise HTTPException(status_code=422, detail=f"invalid instance: {fatal[0]}")
    return inst


def _options(req: SolveRequest) -> MethodOptions:
    return MethodOptions(
        gap=req.controls.gap,
        time_limit=req.controls.time_limit,
        delta=req.controls.delta,
        iteration_cap=req.controls.iteration_cap,
        seed=req.seed,
        sample_count=req.sample_count,
        binary_levels=req.binary_levels,
        upsilon=req.upsilon,
        band=req.band,
        oracle_budget=req.oracle_budget,
    )


def _clean(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


class _SyncASGITransport(httpx.BaseTransport):
    """Drive the ASGI app from a synchronous client, one loop per request."""

    def __init__(self, app):
        self._inner = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        body = request.read()
        async_request = httpx.Request(request.method, request.url, headers=request.headers, content=body)

        async def roundtrip():
            response = await self._inner.handle_async_request(async_request)
            content = await response.aread()
            await response.aclose()
            return response, content

        response, content = asyncio.run(roundtrip())
        return httpx.Response(response.status_code, headers=response.headers, content=content)


def in_process_client() -> httpx.Client:
    """HTTP client mounted directly on a fresh service instance."""
    return httpx.Client(
        transport=_SyncASGITransport(create_app()), base_url="http://searchmip.local", timeout=None
    )


def create_app() -> FastAPI:
    app = FastAPI(title="searchmip", version=__version__)

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/methods")
    def methods() -> dict:
        return {"methods": list(ALL_METHODS)}

    @app.post("/instances/generate", response_model=InstanceResponse)
    def generate(req: GenerateRequest) -> InstanceResponse:
        try:
            inst = grid_instance(
                req.grid_side,
                req.searchers,
                req.horizon,
                camouflage=req.camouflage,
                two_class=req.two_class,
                entry_mode=req.entry_mode,
                terminal_row=req.terminal_row,
                endurance=tuple(req.endurance) if req.endurance else None,
                class_weights=tuple(req.class_weights) if req.class_weights else None,
                quality_split=req.quality_split,
                name=req.name,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return InstanceResponse(instance=instance_to_document(inst))

    @app.post("/instances/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        inst = _load_instance(req.instance)
        report = validate_instance(inst)
        return ValidateResponse(
            violations=[{"family": v.family, "location": list(v.location), "message": v.message} for v in report]
        )

    @app.post("/paths", response_model=InstanceResponse)
    def paths(req: PathsRequest) -> InstanceResponse:
        inst = _load_instance(req.instance)
        try:
            markov = inst.markov_target()
        except Exception as exc:
            raise HTTPException(status_code=422, detail="instance already carries an explicit path list") from exc
        try:
            if req.mode == "sample":
                cond = sample_paths(markov, req.count, req.seed)
            else:
                cond = enumerate_paths(markov, req.prob_floor, req.cap)
        except PathExplosionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        from .model import SearchInstance

        swapped = SearchInstance(
            inst.motion,
            inst.classes,
            inst.detection,
            inst.limits,
            inst.horizon,
            cond,
            name=(inst.name + f"-paths{cond.path_count}").lstrip("-"),
            grid_side=inst.grid_side,
        )
        return InstanceResponse(instance=instance_to_document(swapped))

    @app.post("/solve", response_model=SolveResponse)
    def solve_endpoint(req: SolveRequest) -> SolveResponse:
        inst = _load_instance(req.instance, structural_check=True)
        try:
            report: SolveReport = run_method(inst, req.method, _options(req))
        except UnknownMethodError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (PathExplosionError, BudgetExceededError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ModelError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except DimensionError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        record = _clean(report.run_record(inst, _options(req)))
        return SolveResponse(record=record, plan=plan_text(report, inst), trace_csv=trace_to_csv(report.trace))

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest) -> EvaluateResponse:
        inst = _load_instance(req.instance, structural_check=True)
        try:
            plan = parse_plan(req.plan, inst)
        except FileFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        result = evaluate_plan(inst, plan)
        return EvaluateResponse(**result)

    return app


app = create_app()
