"""HTTP/JSON service exposing samples, catalog annotation, and edits.

Reads can run concurrently; catalog mutations are serialized through one
lock and written through to disk before the response returns, so the on-disk
manifest always reflects the last acknowledged change. Edits are read-only.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import editor, metrics, semantics
from .errors import (
    AlreadyAssigned,
    GanLocalError,
    MissingLayerAttribution,
    UnknownCluster,
    UnknownPart,
)
from .ndio import bilinear_resize
from .project import Project

# Fixed overlay palette: 15 visually distinct RGB colors, assigned to
# clusters in id order (cycled when k > 15) so screenshots are reproducible.
OVERLAY_PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (128, 0, 0),
    (128, 128, 0),
)


class LabelBody(BaseModel):
    cluster_id: int
    label: str


class PartBody(BaseModel):
    label: str
    cluster_ids: list[int] = Field(min_length=1)


class EditBody(BaseModel):
    target: int
    reference: int
    part_id: str
    mode: str
    lam: float | None = Field(default=None, alias="lambda")
    epsilon: float | None = None
    rho_ratio: float = editor.DEFAULT_RHO_RATIO

    model_config = {"populate_by_name": True}


def _png_bytes(image: np.ndarray) -> bytes:
    from PIL import Image

    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _catalog_json(catalog: semantics.SemanticCatalog) -> dict:
    return {
        "base_layer_id": catalog.base_layer_id,
        "k": catalog.k,
        "clusters": [
            {"id": c.id, "label": c.label, "merged_into": c.merged_into}
            for c in catalog.clusters
        ],
        "parts": [
            {"part_id": p.part_id, "label": p.label, "cluster_ids": list(p.cluster_ids)}
            for p in catalog.parts
        ],
        "layers": sorted(catalog.attributions),
        "channels": {str(l): int(att.m.shape[1]) for l, att in sorted(catalog.attributions.items())},
        "provenance": catalog.provenance,
    }


def create_app(project: Project) -> FastAPI:
    app = FastAPI(title="ganlocal")
    write_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "validation", "fields": fields})

    @app.exception_handler(GanLocalError)
    async def domain_handler(request: Request, exc: GanLocalError):
        return JSONResponse(
            status_code=500, content={"error": type(exc).__name__, "message": str(exc)}
        )

    def _error(status: int, message: str, **extra) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message, **extra})

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/samples")
    def samples() -> dict:
        images = project.images
        return {
            "samples": [
                {
                    "id": i,
                    "thumbnail": base64.b64encode(_png_bytes(images[i])).decode("ascii"),
                }
                for i in range(images.shape[0])
            ]
        }

    @app.get("/api/samples/{sample_id}/image")
    def sample_image(sample_id: int):
        images = project.images
        if not 0 <= sample_id < images.shape[0]:
            return _error(404, f"unknown sample {sample_id}")
        return Response(content=_png_bytes(images[sample_id]), media_type="image/png")

    @app.get("/api/samples/{sample_id}/membership")
    def sample_membership(sample_id: int, layer: int | None = None):
        images = project.images
        if not 0 <= sample_id < images.shape[0]:
            return _error(404, f"unknown sample {sample_id}")
        catalog = project.catalog
        u = catalog.base_membership
        if not 0 <= sample_id < u.data.shape[0]:
            return _error(404, f"no stored membership for sample {sample_id}")
        h, w = images.shape[2:]
        if layer is not None:
            if layer not in project.captures:
                return _error(404, f"unknown layer {layer}")
            lh, lw = project.captures[layer].data.shape[2:]
        else:
            lh, lw = u.data.shape[2:]
        # Color the argmax cluster at the chosen layer's granularity, then
        # blow it up to image size and blend 50/50 with the sample.
        soft = bilinear_resize(u.data[sample_id : sample_id + 1].astype(np.float64), lh, lw)[0]
        labels = soft.argmax(axis=0)
        palette = np.array(
            [OVERLAY_PALETTE[i % len(OVERLAY_PALETTE)] for i in range(catalog.k)],
            dtype=np.float64,
        )
        colors = palette[labels].transpose(2, 0, 1) / 255.0
        reps_h, reps_w = h // lh, w // lw
        if reps_h * lh == h and reps_w * lw == w and reps_h >= 1 and reps_w >= 1:
            colors = np.repeat(np.repeat(colors, reps_h, axis=1), reps_w, axis=2)
        else:
            colors = bilinear_resize(colors, h, w)
        overlay = 0.5 * project.images[sample_id] + 0.5 * colors
        return Response(content=_png_bytes(overlay), media_type="image/png")

    @app.get("/api/catalog")
    def get_catalog() -> dict:
        return _catalog_json(project.catalog)

    @app.put("/api/catalog/labels")
    def put_label(body: LabelBody):
        with write_lock:
            try:
                catalog = semantics.set_label(project.catalog, body.cluster_id, body.label)
            except UnknownCluster as exc:
                return _error(404, str(exc))
            project.save_catalog(catalog)
        return _catalog_json(catalog)

    @app.post("/api/catalog/parts")
    def post_part(body: PartBody):
        with write_lock:
            try:
                catalog = semantics.merge_clusters(
                    project.catalog, body.cluster_ids, body.label
                )
            except UnknownCluster as exc:
                return _error(404, str(exc))
            except AlreadyAssigned as exc:
                return _error(409, str(exc))
            project.save_catalog(catalog)
        return _catalog_json(catalog)

    @app.post("/api/edit")
    def post_edit(body: EditBody):
        try:
            params = editor.EditParams(
                mode=body.mode,
                lam=body.lam,
                epsilon=body.epsilon,
                rho_ratio=body.rho_ratio,
            )
        except ValueError as exc:
            return _error(400, "validation", fields=[{"field": "mode", "message": str(exc)}])
        n = project.sample_count
        for name, sid in (("target", body.target), ("reference", body.reference)):
            if not 0 <= sid < n:
                return _error(404, f"unknown {name} sample {sid}")
        try:
            bundle = project.edit_bundle(
                ("sample", body.target), ("sample", body.reference), body.part_id, params
            )
        except (UnknownPart, MissingLayerAttribution) as exc:
            return _error(404, str(exc))
        report: metrics.LocalityReport = bundle["locality"]
        diff = bundle["diff"]
        peak = float(diff.max())
        heat = diff / peak if peak > 0 else diff
        heat_rgb = np.stack([heat, heat, heat])
        return {
            "edited_png_base64": base64.b64encode(
                _png_bytes(bundle["result"].edited.image)
            ).decode("ascii"),
            "target_png_base64": base64.b64encode(
                _png_bytes(bundle["result"].target.image)
            ).decode("ascii"),
            "diff_png_base64": base64.b64encode(_png_bytes(heat_rgb)).decode("ascii"),
            "diff_max": peak,
            "locality": report.to_dict(),
            "q_summary": {
                str(l): {"support": s["support"], "budget_spent": s["budget_spent"]}
                for l, s in bundle["q_summary"].items()
            },
        }

    import os
    from pathlib import Path

    console_dir = os.environ.get("GANLOCAL_CONSOLE", "frontend/dist")
    candidate = Path(console_dir)
    if (candidate / "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=candidate, html=True), name="console")
    return app
