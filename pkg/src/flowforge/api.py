"""HTTP surface: flow instances and their pending IO as a JSON API.

One service process owns one bundle and one store root. Instances
persist as images under the state root, so a restarted service picks up
exactly where the previous one stopped. Per-instance operations are
serialized with an instance-level lock; distinct instances proceed
concurrently.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .codec import to_plain
from .engine import FlowInstance, IoRequest, Runtime, Status
from .errors import EngineError, FlowforgeError
from .model import TypeRef, resolve_type_ref
from .runner import decode_io_values
from .values import BoolVal, FloatVal, IntVal, StringVal, Value

_HTTP_STATUS = {
    "E_STALE_REQUEST": 409,
    "E_MISSING_VARIABLE": 422,
    "E_TYPE_MISMATCH": 422,
    "E_UNEXPECTED_VARIABLE": 422,
    "E_NOT_WAITING": 409,
    "E_NOT_FOUND": 404,
    "E_VALIDATION": 409,
}


def _error_response(exc: FlowforgeError) -> JSONResponse:
    return JSONResponse({"code": exc.code, "message": str(exc)},
                        status_code=_HTTP_STATUS.get(exc.code, 500))


def describe_type_ref(runtime: Runtime, ref: TypeRef, seen: tuple[str, ...] = ()) -> dict:
    """Self-contained type description a client can render a form from."""
    if ref.is_basic:
        return {"kind": ref.target.value, "set": ref.is_set}
    name = ref.target
    out = {"kind": "RECORD", "type": name, "set": ref.is_set}
    if name in seen:
        out["recursive"] = True
        return out
    entry = runtime.bundle.types.get(name)
    if entry is None:
        out["recursive"] = False
        out["attributes"] = []
        return out
    td, dom = entry
    out["attributes"] = [
        {"name": a.name, "type": describe_type_ref(runtime, a.type_ref, seen + (name,))}
        for a in td.attributes
    ]
    return out


def _instance_summary(instance: FlowInstance) -> dict:
    return {
        "instanceId": instance.instance_id,
        "flow": instance.flow_name,
        "status": instance.status.value,
        "position": instance.position,
        "fault": ({"code": instance.fault.code, "message": instance.fault.message}
                  if instance.fault else None),
    }


def _io_payload(runtime: Runtime, request: IoRequest) -> dict:
    return {
        "requestId": request.request_id,
        "instanceId": request.instance_id,
        "io": request.io_name,
        "published": {
            name: to_plain(value, blobs=runtime.blobs, inline_images=True)
            for name, value in request.published.items()
        },
        "expected": [
            {"variable": name, "type": describe_type_ref(runtime, ref)}
            for name, ref in request.expected
        ],
    }


def _decode_initial_vars(data: dict) -> dict[str, Value]:
    out: dict[str, Value] = {}
    for name, raw in (data or {}).items():
        if isinstance(raw, bool):
            out[name] = BoolVal(raw)
        elif isinstance(raw, int):
            out[name] = IntVal(raw)
        elif isinstance(raw, float):
            out[name] = FloatVal(raw)
        elif isinstance(raw, str):
            out[name] = StringVal(raw)
        else:
            raise EngineError(
                f"initial variable '{name}' must be a scalar JSON value",
                code="E_TYPE_MISMATCH")
    return out


def create_app(runtime: Runtime, *, console_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="flowforge", version="0.1.0")
    instances: dict[str, FlowInstance] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    for instance in runtime.load_all_instances():
        instances[instance.instance_id] = instance
        locks[instance.instance_id] = threading.Lock()

    def _get(instance_id: str) -> FlowInstance:
        instance = instances.get(instance_id)
        if instance is None:
            raise EngineError(f"no instance '{instance_id}'", code="E_NOT_FOUND")
        return instance

    @app.exception_handler(FlowforgeError)
    async def _on_error(_req: Request, exc: FlowforgeError):
        return _error_response(exc)

    @app.post("/flows/{flow_name}/instances", status_code=201)
    def create_instance(flow_name: str, body: Optional[dict] = None):
        initial = _decode_initial_vars((body or {}).get("initialVars", {}))
        instance = runtime.start_instance(flow_name, initial)
        with registry_lock:
            instances[instance.instance_id] = instance
            locks[instance.instance_id] = threading.Lock()
        return _instance_summary(instance)

    @app.get("/instances")
    def list_instances():
        return [_instance_summary(i) for i in instances.values()]

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str):
        return _instance_summary(_get(instance_id))

    @app.get("/instances/{instance_id}/io")
    def get_pending_io(instance_id: str):
        instance = _get(instance_id)
        if instance.pending_io is None:
            return Response(status_code=204)
        return _io_payload(runtime, instance.pending_io)

    @app.post("/instances/{instance_id}/io")
    def answer_io(instance_id: str, body: dict):
        instance = _get(instance_id)
        request_id = body.get("requestId")
        if not isinstance(request_id, str):
            raise EngineError("body needs a string 'requestId'", code="E_MISSING_VARIABLE")
        wire = body.get("values", {})
        if not isinstance(wire, dict):
            raise EngineError("'values' must be an object", code="E_TYPE_MISMATCH")
        with locks[instance_id]:
            if instance.pending_io is None:
                raise EngineError("instance has no pending io", code="E_STALE_REQUEST")
            values = decode_io_values(runtime, instance.pending_io, wire)
            runtime.resume_with_io(instance, request_id, values)
        return _instance_summary(instance)

    @app.get("/instances/{instance_id}/trace")
    def get_trace(instance_id: str):
        return {"trace": _get(instance_id).trace}

    if console_dir and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app
