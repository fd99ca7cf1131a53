"""JSON-over-HTTP localization endpoint.

The service is stateless: it accepts per-slice predictions (not
volumes), fits them server-side, and returns the mapping, the verdict
and the landmarks covered by the scan. Handlers are pure functions of
(payload, config), so responses are byte-identical for identical
requests and server seed.

    POST /v1/localize   fit predictions            200 / 400 / 422
    GET  /v1/landmarks  active landmark table      200
    GET  /v1/health     liveness + version         200
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import __version__
from .coords import LandmarkTable, DEFAULT_LANDMARKS
from .fitter import (
    DegenerateSampleError,
    NoConsensusError,
    RansacConfig,
    apply_mapping,
    fit_mapping,
)
from .gatekeeper import GateConfig, evaluate, no_consensus_verdict
from .predictor import SlicePrediction
from .volume_io import VolumeMeta

__all__ = ["ServiceConfig", "handle_localize", "handle_landmarks",
           "handle_health", "serve"]


@dataclass(frozen=True)
class ServiceConfig:
    ransac: RansacConfig = RansacConfig()
    gate: GateConfig = GateConfig()
    landmarks: LandmarkTable = field(default_factory=lambda: DEFAULT_LANDMARKS)


class _BadRequest(Exception):
    pass


def _require(condition: bool, message: str):
    if not condition:
        raise _BadRequest(message)


def _parse_request(payload) -> tuple[list[SlicePrediction], VolumeMeta | None, int]:
    _require(isinstance(payload, dict), "body must be a JSON object")
    meta_raw = payload.get("meta")
    _require(isinstance(meta_raw, dict), 'missing "meta" object')
    num_slices = meta_raw.get("num_slices")
    _require(isinstance(num_slices, int) and not isinstance(num_slices, bool)
             and num_slices >= 1, '"meta.num_slices" must be a positive integer')

    raw = payload.get("predictions")
    _require(isinstance(raw, list) and len(raw) > 0,
             '"predictions" must be a non-empty list')
    predictions = []
    for item in raw:
        _require(isinstance(item, dict) and "index" in item and "position" in item,
                 'each prediction needs "index" and "position"')
        index, position = item["index"], item["position"]
        _require(isinstance(index, int) and not isinstance(index, bool)
                 and 0 <= index < num_slices,
                 f"prediction index {index!r} must be an integer < num_slices")
        _require(isinstance(position, (int, float)) and not isinstance(position, bool)
                 and math.isfinite(position) and 0.0 <= position <= 100.0,
                 f"prediction position {position!r} must be a number in [0, 100]")
        predictions.append(SlicePrediction(index, float(position)))

    spacing = meta_raw.get("spacing_between_slices_mm")
    orientation = meta_raw.get("orientation", "unknown")
    meta = None
    if spacing is not None or orientation != "unknown":
        _require(spacing is None or (isinstance(spacing, (int, float))
                                     and math.isfinite(spacing) and spacing > 0),
                 '"meta.spacing_between_slices_mm" must be a positive number')
        try:
            meta = VolumeMeta(num_slices=num_slices, rows=1, cols=1,
                              spacing_between_slices_mm=spacing,
                              orientation=orientation)
        except ValueError as exc:
            raise _BadRequest(str(exc)) from None
    return predictions, meta, num_slices


def _apply_overrides(config: ServiceConfig, payload: dict) -> ServiceConfig:
    overrides = payload.get("config")
    if overrides is None:
        return config
    _require(isinstance(overrides, dict), '"config" must be an object')
    try:
        ransac = replace(config.ransac, **overrides.get("ransac", {}))
        gate_over = dict(overrides.get("gate", {}))
        if "mm_per_unit_range" in gate_over:
            gate_over["mm_per_unit_range"] = tuple(gate_over["mm_per_unit_range"])
        gate = replace(config.gate, **gate_over)
    except (TypeError, ValueError) as exc:
        raise _BadRequest(f"bad config override: {exc}") from None
    return ServiceConfig(ransac=ransac, gate=gate, landmarks=config.landmarks)


def _landmarks_in_scan(mapping, num_slices: int, table: LandmarkTable) -> list[dict]:
    ends = apply_mapping(mapping, np.array([0, num_slices - 1]))
    lo, hi = float(min(ends)), float(max(ends))
    covered = []
    for landmark_id, position in table.entries:
        if lo <= position <= hi and mapping.slope != 0:
            slice_index = int(round((position - mapping.intercept) / mapping.slope))
            covered.append({
                "landmark_id": landmark_id,
                "slice_index": max(0, min(num_slices - 1, slice_index)),
            })
    return covered


def handle_localize(payload, config: ServiceConfig) -> tuple[int, dict]:
    """(status, response body) for a localize request.

    200 carries an accepted localization; 422 an unreliable one (no
    consensus, or the gatekeeper rejected the fit) with the verdict in
    the body; 400 a malformed request.
    """
    try:
        predictions, meta, num_slices = _parse_request(payload)
        config = _apply_overrides(config, payload)
    except _BadRequest as exc:
        return 400, {"error": str(exc)}

    try:
        mapping = fit_mapping(predictions, config.ransac)
    except (NoConsensusError, DegenerateSampleError) as exc:
        return 422, {"error": str(exc), "verdict": no_consensus_verdict().to_dict()}

    verdict = evaluate(mapping, meta, config.gate)
    body = {
        "slope": mapping.slope,
        "intercept": mapping.intercept,
        "fit_score": mapping.fit_score,
        "inlier_count": mapping.inlier_count,
        "verdict": verdict.to_dict(),
        "landmarks_in_scan": _landmarks_in_scan(mapping, num_slices, config.landmarks),
    }
    return (200 if verdict.accepted else 422), body


def handle_landmarks(config: ServiceConfig) -> tuple[int, list]:
    return 200, [{"id": lid, "position": pos} for lid, pos in config.landmarks.entries]


def handle_health(config: ServiceConfig) -> tuple[int, dict]:
    return 200, {"status": "ok", "version": __version__}


def _encode(body) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    server_version = f"axloc/{__version__}"
    config: ServiceConfig = ServiceConfig()

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _respond(self, status: int, body) -> None:
        data = _encode(body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/v1/landmarks":
            self._respond(*handle_landmarks(self.config))
        elif self.path == "/v1/health":
            self._respond(*handle_health(self.config))
        else:
            self._respond(404, {"error": f"no such endpoint {self.path}"})

    def do_POST(self):
        if self.path != "/v1/localize":
            self._respond(404, {"error": f"no such endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._respond(400, {"error": "body is not valid JSON"})
            return
        try:
            self._respond(*handle_localize(payload, self.config))
        except Exception as exc:  # pragma: no cover - defensive 500
            self._respond(500, {"error": f"internal error: {exc}"})


def make_server(config: ServiceConfig, bind: str = "127.0.0.1",
                port: int = 8080) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"config": config})
    return ThreadingHTTPServer((bind, port), handler)


def serve(config: ServiceConfig, bind: str = "127.0.0.1", port: int = 8080) -> None:
    server = make_server(config, bind, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
