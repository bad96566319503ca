"""Read-only HTTP/JSON API over a QueryService, plus static UI serving.

Endpoint paths are a public contract::

    GET /api/runs
    GET /api/runs/{id}/manifest
    GET /api/runs/{id}/graph?reduced=
    GET /api/runs/{id}/steps?trial=&category=&meta_key=&meta_value=
    GET /api/runs/{id}/record?trial=&step=&node=&variant=&mode=&loss=&view=&sample=
    GET /api/runs/{id}/outlier-trace?trial=&step=&sample=&z=
    GET /api/runs/{id}/gradient-balance?trial=&step=&node=&loss=
    GET /api/runs/{id}/network
    GET /api/runs/{id}/notes?from=&to=
    GET /api/runs/{id}/scalars?series=&from=&to=
    GET /api/runs/{id}/selectors

Errors come back as structured JSON {"code", "message", "detail"}.  Non-finite
floats are encoded as the strings "NaN", "Infinity", and "-Infinity" so every
response body is strict JSON.
"""

from __future__ import annotations

import json
import math
import re
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import (
    InsufficientDataError,
    NotFoundError,
    NotRecordedError,
    SampleNotRetainedError,
    TraceError,
    VersionError,
)
from .model import Mode, SelectorTuple, View
from .query import QueryService

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json; charset=utf-8",
}

_RUN_ROUTE = re.compile(r"^/api/runs/([A-Za-z0-9_.-]+)/([a-z-]+)$")


def sanitize(value):
    """Replace non-finite floats with string markers, recursively."""
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return value
    if isinstance(value, dict):
        return {k: sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    return value


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.detail = detail or {}


def _to_api_error(exc: Exception) -> ApiError:
    if isinstance(exc, SampleNotRetainedError):
        return ApiError(404, "sample_not_retained", str(exc),
                        {"retained": list(exc.retained)})
    if isinstance(exc, NotRecordedError):
        return ApiError(404, "not_recorded", str(exc))
    if isinstance(exc, NotFoundError):
        return ApiError(404, "not_found", str(exc))
    if isinstance(exc, InsufficientDataError):
        return ApiError(422, "insufficient_data", str(exc))
    if isinstance(exc, VersionError):
        return ApiError(500, "version_error", str(exc))
    if isinstance(exc, TraceError):
        return ApiError(500, "trace_error", str(exc))
    return ApiError(500, "internal", f"{type(exc).__name__}: {exc}")


def _query_value(raw: str):
    """Type a metadata filter value the way recorders type them."""
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _require_param(params: dict, name: str) -> str:
    values = params.get(name)
    if not values or not values[0]:
        raise ApiError(400, "bad_request", f"missing required query parameter {name!r}")
    return values[0]


def _optional_param(params: dict, name: str) -> str | None:
    values = params.get(name)
    return values[0] if values and values[0] != "" else None


def _int_param(params: dict, name: str, required: bool = True) -> int | None:
    raw = _require_param(params, name) if required else _optional_param(params, name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ApiError(400, "bad_request", f"query parameter {name!r} must be an integer")


def _float_param(params: dict, name: str) -> float:
    raw = _require_param(params, name)
    try:
        return float(raw)
    except ValueError:
        raise ApiError(400, "bad_request", f"query parameter {name!r} must be a number")


class TraceRequestHandler(BaseHTTPRequestHandler):
    server_version = "tracescope"
    service: QueryService
    ui_root: Path | None

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        parsed = urlparse(self.path)
        try:
            if parsed.path == "/api/runs":
                self._send_json(200, self.service.list_runs())
            elif parsed.path.startswith("/api/"):
                self._dispatch_run_route(parsed.path, parse_qs(parsed.query))
            else:
                self._serve_static(parsed.path)
        except ApiError as exc:
            self._send_error(exc)
        except Exception as exc:  # pragma: no cover - last-resort handler
            self._send_error(_to_api_error(exc))

    def _dispatch_run_route(self, path: str, params: dict) -> None:
        match = _RUN_ROUTE.match(path)
        if not match:
            raise ApiError(404, "not_found", f"no such endpoint {path!r}")
        run_id, endpoint = match.groups()
        service = self.service
        try:
            if endpoint == "manifest":
                payload = service.get_manifest(run_id)
            elif endpoint == "graph":
                payload = service.get_graph(
                    run_id, reduced=_optional_param(params, "reduced") in ("1", "true"))
            elif endpoint == "steps":
                metadata = None
                meta_key = _optional_param(params, "meta_key")
                if meta_key is not None:
                    metadata = (meta_key, _query_value(_require_param(params, "meta_value")))
                payload = service.list_steps(
                    run_id, _require_param(params, "trial"),
                    category=_optional_param(params, "category"), metadata=metadata)
            elif endpoint == "record":
                payload = service.get_record(run_id, self._selector_from(params))
            elif endpoint == "outlier-trace":
                payload = service.outlier_trace(
                    run_id, _require_param(params, "trial"), _int_param(params, "step"),
                    _int_param(params, "sample"), _float_param(params, "z"))
            elif endpoint == "gradient-balance":
                payload = service.gradient_balance(
                    run_id, _require_param(params, "trial"), _int_param(params, "step"),
                    _require_param(params, "node"), loss=_optional_param(params, "loss"))
            elif endpoint == "network":
                payload = service.get_network_tree(run_id)
            elif endpoint == "notes":
                payload = service.get_notes(run_id, _int_param(params, "from", False),
                                            _int_param(params, "to", False))
            elif endpoint == "scalars":
                series = _optional_param(params, "series")
                if series is None:
                    payload = {"series": service.list_scalar_series(run_id)}
                else:
                    payload = service.get_scalars(run_id, series,
                                                  _int_param(params, "from", False),
                                                  _int_param(params, "to", False))
            elif endpoint == "selectors":
                payload = service.selectors(run_id)
            else:
                raise ApiError(404, "not_found", f"no such endpoint {path!r}")
        except ApiError:
            raise
        except Exception as exc:
            raise _to_api_error(exc)
        self._send_json(200, payload)

    def _selector_from(self, params: dict) -> SelectorTuple:
        mode_name = _optional_param(params, "mode") or "forward"
        if mode_name == "forward":
            mode = Mode.forward()
        elif mode_name == "gradient":
            mode = Mode.gradient(_require_param(params, "loss"))
        else:
            raise ApiError(400, "bad_request",
                           f"mode must be 'forward' or 'gradient', got {mode_name!r}")
        view_name = _optional_param(params, "view") or "aggregate"
        if view_name == "aggregate":
            view = View.aggregate()
        elif view_name == "per_neuron":
            view = View.per_neuron()
        elif view_name == "sample":
            view = View.sample(_int_param(params, "sample"))
        else:
            raise ApiError(400, "bad_request",
                           f"view must be aggregate|per_neuron|sample, got {view_name!r}")
        metadata = None
        meta_key = _optional_param(params, "meta_key")
        if meta_key is not None:
            metadata = (meta_key, _query_value(_require_param(params, "meta_value")))
        return SelectorTuple(
            trial_id=_require_param(params, "trial"),
            step=_int_param(params, "step"),
            node_id=_require_param(params, "node"),
            variant_key=_optional_param(params, "variant") or "value",
            mode=mode,
            view=view,
            category_filter=_optional_param(params, "category"),
            metadata_filter=metadata,
        )

    # -- static assets ------------------------------------------------------

    def _serve_static(self, path: str) -> None:
        root = self.ui_root
        if root is None:
            if path in ("/", "/index.html"):
                self._send_json(200, {
                    "service": "tracescope",
                    "message": "no UI assets configured; the API lives under /api",
                    "endpoints": ["/api/runs", "/api/runs/{id}/manifest",
                                  "/api/runs/{id}/graph", "/api/runs/{id}/steps",
                                  "/api/runs/{id}/record", "/api/runs/{id}/outlier-trace",
                                  "/api/runs/{id}/gradient-balance", "/api/runs/{id}/network",
                                  "/api/runs/{id}/notes", "/api/runs/{id}/scalars",
                                  "/api/runs/{id}/selectors"],
                })
                return
            raise ApiError(404, "not_found", f"no such path {path!r}")
        name = path.lstrip("/") or "index.html"
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            # single-page app: unknown paths fall back to the index
            target = (root / "index.html").resolve()
            if not target.is_file():
                raise ApiError(404, "not_found", f"no such path {path!r}")
        body = target.read_bytes()
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- response helpers ---------------------------------------------------

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(sanitize(payload), allow_nan=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, exc: ApiError) -> None:
        self._send_json(exc.status, {"code": exc.code, "message": str(exc),
                                     "detail": sanitize(exc.detail)})


def make_server(data_root: str | Path, host: str = "127.0.0.1", port: int = 8777,
                ui_root: str | Path | None = None,
                verbose: bool = False) -> ThreadingHTTPServer:
    """Build (but do not start) the API server; ``port=0`` picks a free port."""
    service = QueryService(data_root)
    handler = type("BoundHandler", (TraceRequestHandler,), {
        "service": service,
        "ui_root": Path(ui_root) if ui_root is not None else None,
    })
    server = ThreadingHTTPServer((host, port), handler)
    server.verbose = verbose  # type: ignore[attr-defined]
    return server
