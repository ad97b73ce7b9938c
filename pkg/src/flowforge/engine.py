"""The native flow interpreter.

Drives steps, evaluates transitions, manages loop frames and the
data-flow, and suspends on IO: an activity whose io relation fires
parks the instance in WAITING_IO with a pending request until someone
answers it. Instances persist as canonical-JSON images, so a suspended
instance survives restarts and resumes exactly where it stopped.

One instance is single-threaded: callers serialize execute/resume per
instance. Distinct instances may run concurrently; the store and the
invoker are the only shared services.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as FsPath
from typing import Optional

from .dataflow import DataFlow
from .errors import (
    CorruptImageError,
    DataflowError,
    EngineError,
    FlowforgeError,
)
from .expr import eval_expr, exec_script
from .invoker import InvokeContext, KindRegistry, default_registry, invoke
from .model import (
    ActivityStep,
    DeleteStep,
    Direction,
    EndLoopStep,
    FlowCriterion,
    IoRelation,
    ParameterMapping,
    ResolvedType,
    RetrieveStep,
    ScriptStep,
    ServiceRelation,
    StartLoopStep,
    StartStep,
    StoreStep,
    TypeRef,
    ValueMapping,
    check_value,
    resolve_type_ref,
)
from .store import DocumentStore, ResolvedCriterion
from .validator import LinkedBundle
from .values import (
    BASIC_TYPE_NAMES,
    BasicType,
    BoolVal,
    CollectionVal,
    FileBlobStore,
    FloatVal,
    IntVal,
    MemoryBlobStore,
    RecordVal,
    Value,
    basic_type_of,
    canonical_json,
    coerce,
    kind_name,
    value_from_json,
    value_to_json,
)

IMAGE_VERSION = 1
DEFAULT_MAX_STEPS = 100_000


class Status(Enum):
    RUNNING = "RUNNING"
    WAITING_IO = "WAITING_IO"
    COMPLETED = "COMPLETED"
    FAULTED = "FAULTED"


@dataclass
class IoRequest:
    request_id: str
    instance_id: str
    io_name: str
    published: dict[str, Value]
    expected: list[tuple[str, TypeRef]]  # variable name, declared type
    targets: dict[str, tuple[str, ...]]  # variable name -> data-flow path

    def expected_names(self) -> set[str]:
        return {name for name, _ in self.expected}


@dataclass
class Fault:
    code: str
    message: str
    step: Optional[str] = None


@dataclass
class LoopFrame:
    loop_name: str
    start_step: str
    end_step: str
    index: int
    remaining: list[Value]


@dataclass
class FlowInstance:
    instance_id: str
    flow_name: str
    status: Status = Status.RUNNING
    position: Optional[str] = None
    dataflow: DataFlow = field(default_factory=DataFlow)
    loop_stack: list[LoopFrame] = field(default_factory=list)
    pending_io: Optional[IoRequest] = None
    pending_relation_index: int = -1
    fault: Optional[Fault] = None
    io_sequence: int = 0
    steps_executed: int = 0
    trace: list[dict] = field(default_factory=list)

    def published_log(self) -> list[dict]:
        return [e for e in self.trace if e.get("event") == "io_request"]


class Runtime:
    """Executes one validated bundle against one document store."""

    def __init__(self, bundle: LinkedBundle, store: Optional[DocumentStore] = None, *,
                 registry: Optional[KindRegistry] = None,
                 state_root: Optional[str | FsPath] = None,
                 max_steps: int = DEFAULT_MAX_STEPS,
                 trace_reads: bool = False):
        self.bundle = bundle
        self.store = store
        self.registry = registry or default_registry()
        self.state_root = FsPath(state_root) if state_root else None
        self.max_steps = max_steps
        self.trace_reads = trace_reads
        if self.state_root:
            self.instances_dir = self.state_root / "instances"
            self.instances_dir.mkdir(parents=True, exist_ok=True)
            self.blobs = FileBlobStore(self.state_root / "blobs")
        else:
            self.instances_dir = None
            self.blobs = MemoryBlobStore()

    # -- lifecycle ---------------------------------------------------------

    def start_instance(self, flow_name: str,
                       initial_vars: Optional[dict[str, Value]] = None,
                       instance_id: Optional[str] = None) -> FlowInstance:
        """Create an instance at the inferred start and run until it settles."""
        if not self.bundle.ok:
            raise EngineError("bundle has validation errors; refusing to execute",
                              code="E_VALIDATION")
        flow = self.bundle.flow
        if flow is None or flow.name != flow_name:
            raise EngineError(f"no flow named '{flow_name}' in this bundle",
                              code="E_NOT_FOUND")
        instance = FlowInstance(
            instance_id=instance_id or uuid.uuid4().hex,
            flow_name=flow_name,
            position=self.bundle.inferred_start,
            dataflow=DataFlow(initial_vars or {}),
        )
        instance.trace.append({"event": "instance_start", "flow": flow_name,
                               "start": instance.position})
        self._run(instance)
        self._save(instance)
        return instance

    def resume_with_io(self, instance: FlowInstance, request_id: str,
                       values: dict[str, Value]) -> FlowInstance:
        """Answer the pending IO request and continue execution.

        Validation failures leave the instance WAITING_IO untouched.
        """
        if instance.status is not Status.WAITING_IO or instance.pending_io is None:
            raise EngineError("instance is not waiting for io", code="E_NOT_WAITING")
        req = instance.pending_io
        if request_id != req.request_id:
            raise EngineError(
                f"request '{request_id}' is stale (pending: '{req.request_id}')",
                code="E_STALE_REQUEST")
        checked: dict[str, Value] = {}
        for name, type_ref in req.expected:
            if name not in values:
                raise EngineError(f"response is missing variable '{name}'",
                                  code="E_MISSING_VARIABLE")
            checked[name] = self._check_io_value(name, values[name], type_ref)
        extra = set(values) - req.expected_names()
        if extra:
            raise EngineError(f"response has unexpected variables {sorted(extra)}",
                              code="E_UNEXPECTED_VARIABLE")

        instance.trace.append({"event": "io_resume", "requestId": request_id})
        step = self.bundle.flow.step(instance.position)
        if self.trace_reads:
            self._arm_read_trace(instance, step.name)
        try:
            for name, _ in req.expected:
                _write_promoting(instance.dataflow, req.targets[name], checked[name])
        except FlowforgeError as exc:
            self._fault(instance, exc)
            self._save(instance)
            return instance
        instance.pending_io = None
        resume_at = instance.pending_relation_index + 1
        instance.pending_relation_index = -1
        instance.status = Status.RUNNING
        try:
            finished = self._run_activity(instance, step, resume_at)
            if finished:
                self._select_transition(instance, step.name)
        except FlowforgeError as exc:
            self._fault(instance, exc)
        finally:
            if self.trace_reads:
                self._disarm_read_trace(instance)
        self._run(instance)
        self._save(instance)
        return instance

    def _check_io_value(self, name: str, value: Value, type_ref: TypeRef) -> Value:
        io_domain = self._domain_for_ref(type_ref)
        resolved = resolve_type_ref(io_domain, type_ref)
        if resolved.basic is not None and not resolved.is_set:
            try:
                return coerce(value, resolved.basic)
            except ValueError as exc:
                raise EngineError(f"variable '{name}': {exc}", code="E_TYPE_MISMATCH") from exc
        try:
            check_value(io_domain, value, resolved)
        except FlowforgeError as exc:
            raise EngineError(f"variable '{name}': {exc}", code="E_TYPE_MISMATCH") from exc
        return value

    def _domain_for_ref(self, type_ref: TypeRef):
        if not type_ref.is_basic and type_ref.target in self.bundle.types:
            return self.bundle.types[type_ref.target][1]
        # basic refs resolve the same in any domain
        return next(iter(self.bundle.domains.values()))

    # -- main loop ------------------------------------------------------------

    def _run(self, instance: FlowInstance) -> None:
        while instance.status is Status.RUNNING:
            if instance.steps_executed >= self.max_steps:
                self._fault(instance, EngineError(
                    f"step limit {self.max_steps} reached; aborting a probable"
                    f" infinite loop", code="E_STEP_LIMIT"))
                return
            self.execute_step(instance)

    def execute_step(self, instance: FlowInstance) -> FlowInstance:
        """Run the step at the current position and select the next transition."""
        if instance.status is not Status.RUNNING:
            raise EngineError("instance is not running", code="E_NOT_RUNNING")
        flow = self.bundle.flow
        step = flow.step(instance.position)
        if step is None:
            raise EngineError(f"no step named '{instance.position}'", code="E_NOT_FOUND")
        instance.steps_executed += 1
        instance.trace.append({"event": "step_enter", "step": step.name,
                               "kind": type(step).__name__})
        if self.trace_reads:
            self._arm_read_trace(instance, step.name)
        try:
            advance = self._execute(instance, step)
            if advance:
                instance.trace.append({"event": "step_exit", "step": step.name})
                self._select_transition(instance, step.name)
        except FlowforgeError as exc:
            self._fault(instance, exc)
        finally:
            if self.trace_reads:
                self._disarm_read_trace(instance)
        return instance

    def _execute(self, instance: FlowInstance, step) -> bool:
        """Run one step's behavior. Returns False when the step already
        moved the position (loop bookkeeping) or suspended the instance."""
        df = instance.dataflow
        if isinstance(step, StartStep):
            return True  # anchors the start; no behavior
        if isinstance(step, ActivityStep):
            return self._run_activity(instance, step, 0)
        if isinstance(step, ScriptStep):
            effects = exec_script(step.script, df)
            instance.trace.append({"event": "script", "step": step.name,
                                   "effects": [f"{e.op}:{e.path}" for e in effects]})
            return True
        if isinstance(step, StoreStep):
            self._require_store()
            for var in step.variables:
                value = df.read((var,))
                ids = self.store.store(_record_type_of(var, value), value)
                stamped = _stamp_ids(value, ids)
                df.write((var,), stamped)
                instance.trace.append({"event": "store", "step": step.name,
                                       "variable": var, "ids": ids})
            return True
        if isinstance(step, RetrieveStep):
            self._require_store()
            criteria = self._resolve_criteria(step.criteria, df)
            result = self.store.retrieve(step.type_name, criteria, step.is_set)
            _write_promoting(df, (step.target_variable,), result)
            count = len(result.items) if isinstance(result, CollectionVal) else 1
            instance.trace.append({"event": "retrieve", "step": step.name,
                                   "type": step.type_name, "count": count})
            return True
        if isinstance(step, DeleteStep):
            self._require_store()
            criteria = self._resolve_criteria(step.criteria, df)
            count = self.store.delete(step.type_name, criteria)
            instance.trace.append({"event": "delete", "step": step.name,
                                   "type": step.type_name, "count": count})
            return True
        if isinstance(step, StartLoopStep):
            items = df.read(step.data_flow_set)
            if not isinstance(items, CollectionVal):
                raise EngineError(
                    f"loop '{step.name}' iterates over {kind_name(items)}, not a set",
                    code="E_TYPE_MISMATCH")
            loop = self.bundle.loop_for_start(step.name)
            if not items.items:
                instance.trace.append({"event": "loop_skip", "step": step.name})
                instance.position = loop.end
                return False
            instance.loop_stack.append(LoopFrame(
                step.loop_name, step.name, loop.end, 0, list(items.items[1:])))
            df.push_frame({step.loop_name: items.items[0],
                           f"{step.loop_name}_index": IntVal(0)})
            instance.trace.append({"event": "loop_enter", "step": step.name,
                                   "size": len(items.items)})
            return True
        if isinstance(step, EndLoopStep):
            frame = instance.loop_stack[-1] if instance.loop_stack else None
            if frame is None or frame.end_step != step.name:
                return True  # zero-iteration pass-through
            if frame.remaining:
                frame.index += 1
                nxt = frame.remaining.pop(0)
                df.rebind_frame({frame.loop_name: nxt,
                                 f"{frame.loop_name}_index": IntVal(frame.index)})
                entry = self.bundle.flow.outgoing(frame.start_step)[0].target
                instance.trace.append({"event": "loop_iterate", "step": step.name,
                                       "index": frame.index})
                instance.position = entry
                return False
            instance.loop_stack.pop()
            df.pop_frame()
            instance.trace.append({"event": "loop_exit", "step": step.name})
            return True
        raise EngineError(f"unknown step kind {type(step).__name__}", code="E_INTERNAL")

    def _require_store(self) -> None:
        if self.store is None:
            raise EngineError("this flow uses database steps but no store is attached",
                              code="E_IO")

    def _resolve_criteria(self, criteria: list[FlowCriterion],
                          df: DataFlow) -> list[ResolvedCriterion]:
        out = []
        for c in criteria:
            value = c.literal if c.literal is not None else df.read(c.value_path)
            out.append(ResolvedCriterion(".".join(c.field_path), c.op, value))
        return out

    # -- activities ---------------------------------------------------------------

    def _run_activity(self, instance: FlowInstance, step: ActivityStep,
                      start_index: int) -> bool:
        """Run relations from start_index; False when suspended on io."""
        df = instance.dataflow
        act, _dom = self.bundle.activities[step.activity]
        endpoint_names = self._endpoint_names(act)
        endpoint_overwrites = {ow.target: ow.literal for ow in step.overwrites
                               if ow.target in endpoint_names}
        if start_index == 0:
            for ow in step.overwrites:
                if ow.target not in endpoint_names:
                    _write_promoting(df, (ow.target,), ow.literal)
        for i in range(start_index, len(act.relations)):
            rel = act.relations[i]
            if isinstance(rel, ServiceRelation):
                self._run_service_relation(instance, step, rel, endpoint_overwrites)
            else:
                self._suspend_on_io(instance, step, rel, i, endpoint_overwrites)
                return False
        return True

    def _endpoint_names(self, act) -> set[str]:
        names: set[str] = set()
        for rel in act.relations:
            if isinstance(rel, ServiceRelation):
                svc, _ = self.bundle.services[rel.service]
                names.update(p.name for p in svc.inputs)
            else:
                names.update(m.endpoint for m in rel.output_mappings)
        return names

    def _run_service_relation(self, instance: FlowInstance, step: ActivityStep,
                              rel: ServiceRelation, overwrites: dict[str, Value]) -> None:
        df = instance.dataflow
        svc, svc_dom = self.bundle.services[rel.service]
        if rel.service not in self.bundle.bindings:
            raise EngineError(f"service '{rel.service}' has no binding",
                              code="E_UNBOUND")
        binding, abr = self.bundle.bindings[rel.service]
        inputs: dict[str, Value] = {}
        for m in rel.mappings:
            is_input = isinstance(m, ValueMapping) or m.direction is Direction.IN
            if not is_input:
                continue
            if m.endpoint in overwrites:
                inputs[m.endpoint] = overwrites[m.endpoint]
            elif isinstance(m, ValueMapping):
                inputs[m.endpoint] = m.literal
            else:
                inputs[m.endpoint] = df.read(m.path)
        for name, value in overwrites.items():
            if svc.input(name) is not None:
                inputs[name] = value
        instance.trace.append({"event": "invoke", "step": step.name,
                               "service": rel.service,
                               "kind": _binding_kind(binding)})
        ctx = InvokeContext(
            base_dir=FsPath(abr.source_dir) if abr.source_dir else None,
            blobs=self.blobs)
        outputs = invoke(binding, svc, svc_dom, inputs, registry=self.registry, ctx=ctx)
        for m in rel.mappings:
            if isinstance(m, ParameterMapping) and m.direction is Direction.OUT:
                _write_promoting(df, m.path, outputs[m.endpoint])

    def _suspend_on_io(self, instance: FlowInstance, step: ActivityStep,
                       rel: IoRelation, relation_index: int,
                       overwrites: dict[str, Value]) -> None:
        df = instance.dataflow
        io, io_dom = self.bundle.ios[rel.io]
        published: dict[str, Value] = {}
        for m in rel.output_mappings:
            if m.endpoint in overwrites:
                value = overwrites[m.endpoint]
            elif isinstance(m, ValueMapping):
                value = m.literal
            else:
                value = df.read(m.path)
            var = io.variable(m.endpoint)
            resolved = resolve_type_ref(io_dom, var.type_ref)
            if resolved.basic is not None and not resolved.is_set:
                try:
                    value = coerce(value, resolved.basic)
                except ValueError as exc:
                    raise EngineError(f"published '{m.endpoint}': {exc}",
                                      code="E_TYPE_MISMATCH") from exc
            published[m.endpoint] = value
        expected = [(m.endpoint, io.variable(m.endpoint).type_ref)
                    for m in rel.input_mappings]
        targets = {m.endpoint: m.path for m in rel.input_mappings}
        request_id = f"{instance.instance_id}:io:{instance.io_sequence}"
        instance.io_sequence += 1
        instance.pending_io = IoRequest(request_id, instance.instance_id, rel.io,
                                        published, expected, targets)
        instance.pending_relation_index = relation_index
        instance.status = Status.WAITING_IO
        instance.trace.append({"event": "io_request", "step": step.name,
                               "io": rel.io, "requestId": request_id,
                               "published": {k: value_to_json(v)
                                             for k, v in published.items()}})

    # -- transitions -------------------------------------------------------------

    def _select_transition(self, instance: FlowInstance, step_name: str) -> None:
        flow = self.bundle.flow
        outgoing = flow.outgoing(step_name)
        if not outgoing:
            instance.status = Status.COMPLETED
            instance.trace.append({"event": "completed", "step": step_name})
            return
        default = None
        for t in outgoing:
            if t.condition is None:
                if default is None:
                    default = t
                continue
            verdict = eval_expr(t.condition, instance.dataflow.read)
            if not isinstance(verdict, BoolVal):
                raise EngineError(
                    f"condition on {t.source} -> {t.target} did not produce a BOOLEAN",
                    code="E_TYPE_MISMATCH")
            if verdict.value:
                self._take(instance, t)
                return
        if default is not None:
            self._take(instance, default)
            return
        raise EngineError(
            f"no transition condition out of '{step_name}' is true and there is"
            f" no default", code="E_NO_TRANSITION")

    def _take(self, instance: FlowInstance, transition) -> None:
        instance.trace.append({"event": "transition", "from": transition.source,
                               "to": transition.target})
        instance.position = transition.target

    def _fault(self, instance: FlowInstance, exc: FlowforgeError) -> None:
        instance.status = Status.FAULTED
        instance.fault = Fault(exc.code, str(exc), instance.position)
        instance.trace.append({"event": "fault", "step": instance.position,
                               "code": exc.code, "message": str(exc)})

    # -- read-trace audit hooks -----------------------------------------------------

    def _arm_read_trace(self, instance: FlowInstance, step_name: str) -> None:
        df = instance.dataflow

        def on_read(var: str):
            instance.trace.append({"event": "df_read", "step": step_name, "var": var})

        def on_write(var: str):
            instance.trace.append({"event": "df_write", "step": step_name, "var": var})

        df.on_read = on_read
        df.on_write = on_write

    def _disarm_read_trace(self, instance: FlowInstance) -> None:
        instance.dataflow.on_read = None
        instance.dataflow.on_write = None

    # -- persistence -------------------------------------------------------------------

    def persist_instance(self, instance: FlowInstance) -> bytes:
        image = {
            "version": IMAGE_VERSION,
            "instanceId": instance.instance_id,
            "flow": instance.flow_name,
            "status": instance.status.value,
            "position": instance.position,
            "ioSequence": instance.io_sequence,
            "stepsExecuted": instance.steps_executed,
            "pendingRelationIndex": instance.pending_relation_index,
            "dataflow": instance.dataflow.snapshot_obj(),
            "loopStack": [
                {"loopName": f.loop_name, "startStep": f.start_step,
                 "endStep": f.end_step, "index": f.index,
                 "remaining": [value_to_json(v) for v in f.remaining]}
                for f in instance.loop_stack
            ],
            "pendingIo": _io_to_json(instance.pending_io),
            "fault": ({"code": instance.fault.code, "message": instance.fault.message,
                       "step": instance.fault.step} if instance.fault else None),
            "trace": instance.trace,
        }
        return canonical_json(image).encode("utf-8")

    def load_instance(self, image: bytes | dict) -> FlowInstance:
        try:
            obj = json.loads(image.decode("utf-8")) if isinstance(image, (bytes, bytearray)) \
                else image
            if obj.get("version") != IMAGE_VERSION:
                raise ValueError(f"unsupported image version {obj.get('version')!r}")
            instance = FlowInstance(
                instance_id=str(obj["instanceId"]),
                flow_name=str(obj["flow"]),
                status=Status(obj["status"]),
                position=obj["position"],
                dataflow=DataFlow.restore(obj["dataflow"]),
                loop_stack=[
                    LoopFrame(f["loopName"], f["startStep"], f["endStep"],
                              int(f["index"]),
                              [value_from_json(v) for v in f["remaining"]])
                    for f in obj["loopStack"]
                ],
                pending_io=_io_from_json(obj["pendingIo"]),
                pending_relation_index=int(obj["pendingRelationIndex"]),
                fault=(Fault(**obj["fault"]) if obj.get("fault") else None),
                io_sequence=int(obj["ioSequence"]),
                steps_executed=int(obj.get("stepsExecuted", 0)),
                trace=list(obj.get("trace", [])),
            )
        except (KeyError, TypeError, ValueError, AttributeError,
                UnicodeDecodeError, CorruptImageError) as exc:
            raise CorruptImageError(f"cannot load instance image: {exc}") from exc
        if (instance.status is Status.WAITING_IO) != (instance.pending_io is not None):
            raise CorruptImageError("image status disagrees with pending io")
        return instance

    def _save(self, instance: FlowInstance) -> None:
        if self.instances_dir is None:
            return
        path = self.instances_dir / f"{instance.instance_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(self.persist_instance(instance))
        tmp.replace(path)

    def load_all_instances(self) -> list[FlowInstance]:
        if self.instances_dir is None:
            return []
        out = []
        for path in sorted(self.instances_dir.glob("*.json")):
            out.append(self.load_instance(path.read_bytes()))
        return out


# ---------------------------------------------------------------------------
# helpers

def _binding_kind(binding) -> str:
    from .model import implementation_kind

    return implementation_kind(binding.implementation)


def _record_type_of(var: str, value: Value) -> str:
    if isinstance(value, RecordVal):
        return value.type_name
    if isinstance(value, CollectionVal):
        if not value.items:
            raise EngineError(
                f"cannot store '{var}': empty collection has no entity type",
                code="E_TYPE_MISMATCH")
        first = value.items[0]
        if isinstance(first, RecordVal):
            return first.type_name
    raise EngineError(f"cannot store '{var}': {kind_name(value)} is not a record",
                      code="E_TYPE_MISMATCH")


def _stamp_ids(value: Value, ids: list[int]) -> Value:
    if isinstance(value, RecordVal):
        return RecordVal(value.type_name, value.attrs, ids[0])
    return CollectionVal(tuple(
        RecordVal(item.type_name, item.attrs, doc_id)
        for item, doc_id in zip(value.items, ids)))


def _write_promoting(df: DataFlow, path: tuple[str, ...], value: Value) -> None:
    """Plain write, except an INTEGER promotes when the target holds a FLOAT."""
    if isinstance(value, IntVal):
        try:
            current = df.read(path)
        except DataflowError:
            current = None
        if isinstance(current, FloatVal):
            value = FloatVal(float(value.value))
    df.write(path, value)


def _io_to_json(req: Optional[IoRequest]):
    if req is None:
        return None
    return {
        "requestId": req.request_id,
        "instanceId": req.instance_id,
        "io": req.io_name,
        "published": {k: value_to_json(v) for k, v in req.published.items()},
        "expected": [
            {"variable": name,
             "target": ref.target.value if ref.is_basic else ref.target,
             "set": ref.is_set}
            for name, ref in req.expected
        ],
        "targets": {k: list(v) for k, v in req.targets.items()},
    }


def _io_from_json(obj) -> Optional[IoRequest]:
    if obj is None:
        return None
    expected = []
    for e in obj["expected"]:
        target = e["target"]
        ref = TypeRef(BasicType(target) if target in BASIC_TYPE_NAMES else target,
                      bool(e["set"]))
        expected.append((str(e["variable"]), ref))
    return IoRequest(
        request_id=str(obj["requestId"]),
        instance_id=str(obj["instanceId"]),
        io_name=str(obj["io"]),
        published={k: value_from_json(v) for k, v in obj["published"].items()},
        expected=expected,
        targets={k: tuple(v) for k, v in obj["targets"].items()},
    )
