"""Executes abstract services through their concrete bindings.

The engine sees one operation: ``invoke(binding, service, inputs) ->
outputs``. Which transport actually runs (REST call, local process,
fixture mock, or a registered custom kind) is invisible to it. Requests
and responses cross each boundary as single JSON documents in wire form.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .codec import DecodeError, from_plain, to_plain
from .errors import InvokeError
from .model import (
    Direction,
    DomainModel,
    GenericImplementation,
    HttpMethod,
    Implementation,
    KIND_MOCK,
    KIND_PROCESS,
    KIND_REST,
    MockImplementation,
    ProcessImplementation,
    RestImplementation,
    RestPlace,
    ServiceBinding,
    ServiceDef,
    ServiceParameter,
    implementation_kind,
    resolve_type_ref,
)
from .values import MemoryBlobStore, Value, coerce, kind_name

DEFAULT_PROCESS_TIMEOUT_MS = 30_000


@dataclass
class InvokeContext:
    """Ambient facts an executor may need."""

    base_dir: Optional[Path] = None  # directory of the .abr file, for relative paths
    blobs: object = field(default_factory=MemoryBlobStore)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p


Executor = Callable[[Implementation, list[ServiceParameter], dict, InvokeContext], dict]


class KindRegistry:
    """Implementation kinds the parser accepts and the invoker can run."""

    def __init__(self, include_builtins: bool = True):
        self._executors: dict[str, Executor] = {}
        if include_builtins:
            self._executors[KIND_REST] = _execute_rest
            self._executors[KIND_PROCESS] = _execute_process
            self._executors[KIND_MOCK] = _execute_mock

    def register(self, kind: str, executor: Executor) -> None:
        if kind in self._executors:
            raise InvokeError(f"implementation kind '{kind}' is already registered",
                              code="E_DUPLICATE_KIND")
        self._executors[kind] = executor

    def kind_names(self) -> frozenset[str]:
        return frozenset(self._executors)

    def executor(self, kind: str) -> Executor:
        if kind not in self._executors:
            raise InvokeError(f"no executor for implementation kind '{kind}'",
                              code="E_UNKNOWN_KIND")
        return self._executors[kind]


_default_registry: Optional[KindRegistry] = None


def default_registry() -> KindRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = KindRegistry()
    return _default_registry


def register_kind(kind: str, executor: Executor) -> None:
    """Register a custom implementation kind on the shared registry."""
    default_registry().register(kind, executor)


def effective_parameters(binding: ServiceBinding, service: ServiceDef) -> list[ServiceParameter]:
    """Declared name mappings, or the identity mapping when none are given."""
    if binding.parameters:
        return binding.parameters
    params = [ServiceParameter(p.name, p.name, Direction.IN) for p in service.inputs]
    params += [ServiceParameter(p.name, p.name, Direction.OUT) for p in service.outputs]
    return params


def invoke(binding: ServiceBinding, service: ServiceDef, domain: DomainModel,
           inputs: dict[str, Value], *, registry: Optional[KindRegistry] = None,
           ctx: Optional[InvokeContext] = None) -> dict[str, Value]:
    """Run a bound service: typed values in, typed values out.

    Inputs must cover every declared IN parameter (INTEGER promotes to
    FLOAT); outputs are decoded per the service's declared types.
    """
    registry = registry or _default_registry
    ctx = ctx or InvokeContext()
    checked: dict[str, Value] = {}
    for param in service.inputs:
        if param.name not in inputs:
            raise InvokeError(f"service {service.name}: input '{param.name}' not provided",
                              code="E_UNBOUND")
        resolved = resolve_type_ref(domain, param.type_ref)
        value = inputs[param.name]
        if resolved.basic is not None and not resolved.is_set:
            try:
                value = coerce(value, resolved.basic)
            except ValueError as exc:
                raise InvokeError(
                    f"service {service.name}: input '{param.name}': {exc}",
                    code="E_TYPE_MISMATCH") from exc
        checked[param.name] = value

    request = {name: to_plain(v, blobs=ctx.blobs, inline_images=True)
               for name, v in checked.items()}
    params = effective_parameters(binding, service)
    kind = implementation_kind(binding.implementation)
    executor = registry.executor(kind)
    response = executor(binding.implementation, params, request, ctx)

    outputs: dict[str, Value] = {}
    for param in service.outputs:
        if param.name not in response:
            raise InvokeError(
                f"service {service.name}: response lacks output '{param.name}'",
                code="E_DECODE")
        resolved = resolve_type_ref(domain, param.type_ref)
        try:
            outputs[param.name] = from_plain(response[param.name], domain, resolved,
                                             blobs=ctx.blobs)
        except DecodeError as exc:
            raise InvokeError(
                f"service {service.name}: output '{param.name}': {exc}",
                code="E_DECODE") from exc
    return outputs


def _concrete(params: list[ServiceParameter], direction: Direction) -> list[ServiceParameter]:
    return [p for p in params if p.direction is direction]


# ---------------------------------------------------------------------------
# REST

def _execute_rest(impl: RestImplementation, params: list[ServiceParameter],
                  request: dict, ctx: InvokeContext) -> dict:
    url = impl.url_template
    query: list[tuple[str, str]] = []
    body: dict = {}
    for p in _concrete(params, Direction.IN):
        plain = request[p.abstract_name]
        place = impl.param_places.get(p.abstract_name, RestPlace.BODY)
        if place is RestPlace.PATH:
            url = url.replace("{" + p.concrete_name + "}",
                              urllib.parse.quote(str(plain), safe=""))
        elif place is RestPlace.QUERY:
            query.append((p.concrete_name, _query_str(plain)))
        else:
            _set_path(body, p.concrete_name.split("."), plain)
    if query:
        sep = "&" if "?" in url else "?"
        url = url + sep + urllib.parse.urlencode(query)

    data = None
    headers = dict(impl.headers)
    if body or impl.method in (HttpMethod.POST, HttpMethod.PUT):
        data = json.dumps(body).encode("utf-8")
        headers.setdefault("Content-Type", "application/json")
    req = urllib.request.Request(url, data=data, method=impl.method.value)
    for k, v in headers.items():
        req.add_header(k, v)
    try:
        with urllib.request.urlopen(req, timeout=impl.timeout_ms / 1000.0) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise InvokeError(f"HTTP {exc.code} from {url}", code="E_REMOTE_STATUS",
                          status=exc.code) from exc
    except (socket.timeout, TimeoutError) as exc:
        raise InvokeError(f"timeout after {impl.timeout_ms} ms calling {url}",
                          code="E_TIMEOUT") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise InvokeError(f"timeout after {impl.timeout_ms} ms calling {url}",
                              code="E_TIMEOUT") from exc
        raise InvokeError(f"cannot reach {url}: {exc.reason}", code="E_REMOTE_STATUS") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvokeError(f"non-JSON response from {url}", code="E_DECODE") from exc

    out: dict = {}
    for p in _concrete(params, Direction.OUT):
        out[p.abstract_name] = _get_path(doc, p.concrete_name.split("."), url)
    return out


def _query_str(plain) -> str:
    if isinstance(plain, bool):
        return "true" if plain else "false"
    if isinstance(plain, (dict, list)):
        return json.dumps(plain)
    return str(plain)


def _set_path(doc: dict, path: list[str], value) -> None:
    for seg in path[:-1]:
        doc = doc.setdefault(seg, {})
    doc[path[-1]] = value


def _get_path(doc, path: list[str], origin: str):
    for seg in path:
        if not isinstance(doc, dict) or seg not in doc:
            raise InvokeError(
                f"response from {origin} lacks field '{'.'.join(path)}'",
                code="E_DECODE")
        doc = doc[seg]
    return doc


# ---------------------------------------------------------------------------
# local process

def _execute_process(impl: ProcessImplementation, params: list[ServiceParameter],
                     request: dict, ctx: InvokeContext) -> dict:
    doc = {p.concrete_name: request[p.abstract_name]
           for p in _concrete(params, Direction.IN)}
    cwd = ctx.resolve(impl.workdir) if impl.workdir else ctx.base_dir
    try:
        proc = subprocess.run(
            shlex.split(impl.command),
            input=json.dumps(doc).encode("utf-8"),
            capture_output=True,
            cwd=str(cwd) if cwd else None,
            timeout=DEFAULT_PROCESS_TIMEOUT_MS / 1000.0,
        )
    except subprocess.TimeoutExpired as exc:
        raise InvokeError(f"process timed out: {impl.command}", code="E_TIMEOUT") from exc
    except (OSError, ValueError) as exc:
        raise InvokeError(f"cannot run {impl.command!r}: {exc}",
                          code="E_PROCESS_EXIT") from exc
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", "replace").strip()
        raise InvokeError(
            f"process exited with {proc.returncode}: {stderr or impl.command}",
            code="E_PROCESS_EXIT", exit_code=proc.returncode)
    try:
        response = json.loads(proc.stdout.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvokeError(f"process wrote non-JSON output: {impl.command}",
                          code="E_DECODE") from exc
    out: dict = {}
    for p in _concrete(params, Direction.OUT):
        if not isinstance(response, dict) or p.concrete_name not in response:
            raise InvokeError(
                f"process response lacks field '{p.concrete_name}'", code="E_DECODE")
        out[p.abstract_name] = response[p.concrete_name]
    return out


# ---------------------------------------------------------------------------
# fixture mock

def _execute_mock(impl: MockImplementation, params: list[ServiceParameter],
                  request: dict, ctx: InvokeContext) -> dict:
    path = ctx.resolve(impl.fixture_file)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvokeError(f"cannot read fixture {path}: {exc}", code="E_DECODE") from exc
    except json.JSONDecodeError as exc:
        raise InvokeError(f"fixture {path} is not valid JSON: {exc}",
                          code="E_DECODE") from exc
    if not isinstance(entries, list):
        raise InvokeError(f"fixture {path} must be a JSON array", code="E_DECODE")

    concrete_request = {p.concrete_name: request[p.abstract_name]
                        for p in _concrete(params, Direction.IN)}
    for entry in entries:
        when = entry.get("when", {})
        if all(k in concrete_request and concrete_request[k] == v
               for k, v in when.items()):
            then = entry.get("then", {})
            out: dict = {}
            for p in _concrete(params, Direction.OUT):
                if p.concrete_name not in then:
                    raise InvokeError(
                        f"fixture entry lacks field '{p.concrete_name}'", code="E_DECODE")
                out[p.abstract_name] = then[p.concrete_name]
            return out
    raise InvokeError(
        f"fixture {path} has no entry matching the request", code="E_DECODE")
