"""HTTP service backing the annotation UI.

JSON/PNG endpoints under /api: frame listing, image bytes, superpixels
(run-length labels + boundary polylines), label get/save, and mask export.
Superpixel maps are computed lazily per frame and cached; label writes are
serialized per frame and persisted atomically (one JSON file per frame in
a sessions/ directory), so a restart loses nothing. Concurrent writers are
last-writer-wins; clients detect conflicts from the timestamp echo.
"""

from __future__ import annotations

import io
import json
import os
import socket
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pydantic
from PIL import Image

from .dataset import FrameRecord, load_manifest, resolve_path
from .errors import PortInUse, UnknownSegmentId
from .geometry import read_image
from .slic import SuperpixelMap, encode_rle, labels_to_mask, slic_superpixels

DEFAULT_SLIC_K = 600
DEFAULT_SLIC_M = 10.0
DEFAULT_SLIC_ITERS = 10


@dataclass
class AnnotationSession:
    frame_id: str
    selected: list[int]
    timestamp: float
    annotator: str | None = None


# Module scope so the postponed annotation on the endpoint resolves; a class
# local to create_app is invisible to get_type_hints under PEP 563.
class _LabelsIn(pydantic.BaseModel):
    selected: list[int]
    annotator: str | None = None


class AnnotationStore:
    """Frame state shared by the endpoints: records, sessions, SLIC cache."""

    def __init__(
        self,
        manifest_path: str | Path,
        sessions_dir: str | Path | None = None,
        slic_k: int = DEFAULT_SLIC_K,
        slic_m: float = DEFAULT_SLIC_M,
        slic_iterations: int = DEFAULT_SLIC_ITERS,
    ):
        self.manifest_path = Path(manifest_path)
        self.base = self.manifest_path.parent
        self.records: dict[str, FrameRecord] = {
            r.frame_id: r for r in load_manifest(self.manifest_path)
        }
        self.order = list(self.records)
        self.sessions_dir = (
            Path(sessions_dir) if sessions_dir is not None else self.base / "sessions"
        )
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.slic_params = (slic_k, slic_m, slic_iterations)
        self._slic_cache: dict[str, SuperpixelMap] = {}
        self._cache_lock = threading.Lock()
        self._frame_locks: dict[str, threading.Lock] = {}
        self._locks_lock = threading.Lock()

    def frame(self, frame_id: str) -> FrameRecord | None:
        return self.records.get(frame_id)

    def image_path(self, record: FrameRecord) -> Path:
        return resolve_path(self.base, record.image_path)

    def _frame_lock(self, frame_id: str) -> threading.Lock:
        with self._locks_lock:
            if frame_id not in self._frame_locks:
                self._frame_locks[frame_id] = threading.Lock()
            return self._frame_locks[frame_id]

    def superpixels(self, frame_id: str) -> SuperpixelMap:
        with self._cache_lock:
            cached = self._slic_cache.get(frame_id)
        if cached is not None:
            return cached
        record = self.records[frame_id]
        image = read_image(self.image_path(record))
        k, m, iters = self.slic_params
        sp = slic_superpixels(image, k=k, m=m, iterations=iters)
        with self._cache_lock:
            self._slic_cache.setdefault(frame_id, sp)
            return self._slic_cache[frame_id]

    def _session_path(self, frame_id: str) -> Path:
        return self.sessions_dir / f"{frame_id}.json"

    def load_session(self, frame_id: str) -> AnnotationSession | None:
        path = self._session_path(frame_id)
        if not path.is_file():
            return None
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return AnnotationSession(
            frame_id=obj["frame_id"],
            selected=[int(v) for v in obj["selected"]],
            timestamp=float(obj["timestamp"]),
            annotator=obj.get("annotator"),
        )

    def save_session(self, frame_id: str, selected, annotator=None) -> AnnotationSession:
        """Validate ids against the frame's superpixels and persist atomically."""
        sp = self.superpixels(frame_id)
        ids = sorted(set(int(v) for v in selected))
        for v in ids:
            if not 0 <= v < sp.n_segments:
                raise UnknownSegmentId(f"superpixel id {v} outside [0, {sp.n_segments})")
        session = AnnotationSession(
            frame_id=frame_id, selected=ids, timestamp=time.time(), annotator=annotator
        )
        path = self._session_path(frame_id)
        with self._frame_lock(frame_id):
            tmp = path.with_suffix(".json.tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(asdict(session), fh)
            os.replace(tmp, path)
        return session

    def annotated(self, frame_id: str) -> bool:
        return self._session_path(frame_id).is_file()

    def mask_png(self, frame_id: str) -> bytes:
        sp = self.superpixels(frame_id)
        session = self.load_session(frame_id)
        selected = session.selected if session else []
        mask = labels_to_mask(sp, selected)
        buf = io.BytesIO()
        Image.fromarray(mask, mode="L").save(buf, format="PNG")
        return buf.getvalue()


def create_app(
    manifest_path: str | Path,
    sessions_dir: str | Path | None = None,
    slic_k: int = DEFAULT_SLIC_K,
    slic_m: float = DEFAULT_SLIC_M,
    slic_iterations: int = DEFAULT_SLIC_ITERS,
    static_dir: str | Path | None = None,
):
    """FastAPI app over an AnnotationStore; manifest problems fail fast here."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse, Response

    store = AnnotationStore(
        manifest_path,
        sessions_dir=sessions_dir,
        slic_k=slic_k,
        slic_m=slic_m,
        slic_iterations=slic_iterations,
    )
    app = FastAPI(title="traversability annotation service")
    app.state.store = store

    def _frame_or_404(frame_id: str) -> FrameRecord:
        record = store.frame(frame_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")
        return record

    @app.get("/api/frames")
    def list_frames():
        return [
            {
                "id": fid,
                "image_url": f"/api/frames/{fid}/image.png",
                "lux": store.records[fid].lux,
                "annotated": store.annotated(fid),
            }
            for fid in store.order
        ]

    @app.get("/api/frames/{frame_id}/image.png")
    def frame_image(frame_id: str):
        record = _frame_or_404(frame_id)
        path = store.image_path(record)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"image missing for {frame_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/frames/{frame_id}/superpixels")
    def frame_superpixels(frame_id: str):
        _frame_or_404(frame_id)
        sp = store.superpixels(frame_id)
        return {
            "n_segments": sp.n_segments,
            "params": sp.params,
            "rle": encode_rle(sp.labels),
            "boundaries": {str(k): v for k, v in sp.boundaries().items()},
        }

    @app.get("/api/frames/{frame_id}/labels")
    def get_labels(frame_id: str):
        _frame_or_404(frame_id)
        session = store.load_session(frame_id)
        if session is None:
            return {"frame_id": frame_id, "selected": [], "timestamp": None, "annotator": None}
        return asdict(session)

    @app.post("/api/frames/{frame_id}/labels")
    def post_labels(frame_id: str, body: _LabelsIn):
        _frame_or_404(frame_id)
        try:
            session = store.save_session(frame_id, body.selected, body.annotator)
        except UnknownSegmentId as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return asdict(session)

    @app.get("/api/frames/{frame_id}/mask.png")
    def frame_mask(frame_id: str):
        _frame_or_404(frame_id)
        return Response(content=store.mask_png(frame_id), media_type="image/png")

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def check_port_free(host: str, port: int) -> None:
    """Bind-probe the address; raise PortInUse if something already listens."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as exc:
            raise PortInUse(f"{host}:{port} is already in use ({exc})") from None


def serve(
    manifest_path: str | Path,
    port: int = 8080,
    host: str = "127.0.0.1",
    **app_kwargs,
) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    app = create_app(manifest_path, **app_kwargs)
    check_port_free(host, port)
    uvicorn.run(app, host=host, port=port, log_level="info")
