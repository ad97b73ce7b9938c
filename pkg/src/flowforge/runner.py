"""Drive flow instances to completion from scripted or interactive IO."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .codec import DecodeError, from_plain, to_plain
from .engine import FlowInstance, IoRequest, Runtime, Status
from .errors import EngineError, FlowforgeError
from .model import resolve_type_ref
from .values import Value


class ScriptExhausted(FlowforgeError):
    code = "E_SCRIPT_EXHAUSTED"


class ScriptMismatch(FlowforgeError):
    code = "E_SCRIPT_MISMATCH"


@dataclass
class IoScriptEntry:
    io: str
    values: dict  # wire-form values


@dataclass
class IoScript:
    """Ordered canned responses standing in for the human answering IO."""

    entries: list[IoScriptEntry] = field(default_factory=list)
    _pos: int = 0
    _occurrences: dict[str, int] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "IoScript":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError("io script must be a JSON array of {io, values}")
        entries = [IoScriptEntry(str(e["io"]), dict(e.get("values", {}))) for e in data]
        return cls(entries)

    @classmethod
    def of(cls, *entries: tuple[str, dict]) -> "IoScript":
        return cls([IoScriptEntry(io, values) for io, values in entries])

    def next_for(self, request: IoRequest) -> dict:
        occurrence = self._occurrences.get(request.io_name, 0)
        self._occurrences[request.io_name] = occurrence + 1
        if self._pos >= len(self.entries):
            raise ScriptExhausted(
                f"script exhausted at {request.io_name}#{occurrence}")
        entry = self.entries[self._pos]
        self._pos += 1
        if entry.io != request.io_name:
            raise ScriptMismatch(
                f"script answers '{entry.io}' but the flow asked"
                f" {request.io_name}#{occurrence}")
        return entry.values


def decode_io_values(runtime: Runtime, request: IoRequest,
                     wire: dict) -> dict[str, Value]:
    """Decode wire-form response values against the request's expected types."""
    expected = dict(request.expected)
    extra = set(wire) - set(expected)
    if extra:
        raise EngineError(f"response has unexpected variables {sorted(extra)}",
                          code="E_UNEXPECTED_VARIABLE")
    out: dict[str, Value] = {}
    for name, ref in request.expected:
        if name not in wire:
            continue  # resume reports the miss with the proper code
        dom = runtime._domain_for_ref(ref)
        resolved = resolve_type_ref(dom, ref)
        try:
            out[name] = from_plain(wire[name], dom, resolved, blobs=runtime.blobs)
        except DecodeError as exc:
            raise EngineError(f"variable '{name}': {exc}",
                              code="E_TYPE_MISMATCH") from exc
    return out


@dataclass
class RunReport:
    instance_id: str
    status: str
    steps_executed: int
    trace_length: int
    final_dataflow: dict
    published: list[dict]
    fault: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "instanceId": self.instance_id,
            "status": self.status,
            "stepsExecuted": self.steps_executed,
            "traceLength": self.trace_length,
            "finalDataflow": self.final_dataflow,
            "published": self.published,
            "fault": self.fault,
        }

    def render(self) -> str:
        lines = [f"instance {self.instance_id}: {self.status}"
                 f" ({self.steps_executed} steps, trace length {self.trace_length})"]
        if self.fault:
            lines.append(f"fault: [{self.fault['code']}] {self.fault['message']}")
        for event in self.published:
            lines.append(f"io {event['io']} published: "
                         + json.dumps(event.get("published", {}), sort_keys=True))
        return "\n".join(lines)


def report_for(instance: FlowInstance) -> RunReport:
    return RunReport(
        instance_id=instance.instance_id,
        status=instance.status.value,
        steps_executed=instance.steps_executed,
        trace_length=len(instance.trace),
        final_dataflow=instance.dataflow.snapshot_obj(),
        published=[{"io": e["io"], "requestId": e["requestId"],
                    "published": e.get("published", {})}
                   for e in instance.published_log()],
        fault=({"code": instance.fault.code, "message": instance.fault.message,
                "step": instance.fault.step} if instance.fault else None),
    )


Responder = Callable[[Runtime, IoRequest], dict]


def run_flow(runtime: Runtime, flow_name: str, responder: Responder, *,
             initial_vars: Optional[dict[str, Value]] = None,
             instance_id: Optional[str] = None) -> FlowInstance:
    """Start an instance and answer every IO request via ``responder``."""
    instance = runtime.start_instance(flow_name, initial_vars, instance_id)
    while instance.status is Status.WAITING_IO:
        request = instance.pending_io
        wire = responder(runtime, request)
        values = decode_io_values(runtime, request, wire)
        runtime.resume_with_io(instance, request.request_id, values)
    return instance


def run_with_script(runtime: Runtime, flow_name: str, script: IoScript, *,
                    initial_vars: Optional[dict[str, Value]] = None,
                    instance_id: Optional[str] = None) -> FlowInstance:
    return run_flow(runtime, flow_name,
                    lambda _rt, req: script.next_for(req),
                    initial_vars=initial_vars, instance_id=instance_id)
