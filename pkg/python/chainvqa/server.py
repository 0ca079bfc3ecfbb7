"""FastAPI inference service.

Frozen models are loaded once by the caller and shared read-only by every
request; each request builds its own tensors, so no locking is needed.
"""

from __future__ import annotations

from typing import Any, Literal

from fastapi import FastAPI, HTTPException, status
from pydantic import BaseModel, Field

from .config import RunConfig
from .errors import ChainVqaError
from .logger import configure_uvicorn_logging, get_logger
from .pipeline import Models, infer
from .records import DialogueRecord, SceneRecord, SqsRecord
from .sqsgen import build_sqs
from .training import Sample
from .version import get_version, log_startup

logger = get_logger(__name__)


class SqsRequest(BaseModel):
    question: str
    scene: SceneRecord


class PredictRequest(BaseModel):
    question: str
    scene: SceneRecord
    sqs_source: Literal["generated", "gold"] = "generated"


class PredictResponse(BaseModel):
    image_id: str
    question: str
    prediction: str
    sqs: list[str] = Field(default_factory=list)
    dialogue: DialogueRecord | None = None


def _raise_http(exc: ChainVqaError) -> None:
    code = exc.status_code or status.HTTP_500_INTERNAL_SERVER_ERROR
    raise HTTPException(status_code=code, detail=str(exc)) from exc


def create_app(config: RunConfig | None = None, models: Models | None = None, **fastapi_kwargs: Any
               ) -> FastAPI:
    """App with /healthz, /version, POST /sqs and, when models are given, POST /predict."""

    config = config or RunConfig()
    version = get_version()
    app = FastAPI(title="chainvqa", version=version, **fastapi_kwargs)

    @app.on_event("startup")
    async def configure_logging_on_startup() -> None:
        configure_uvicorn_logging()

    log_startup("service", version)

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {"status": "healthy", "models_loaded": models is not None}

    @app.get("/version")
    def version_info() -> dict[str, Any]:
        return {"package": "chainvqa", "version": version, "config_hash": config.config_hash()}

    @app.post("/sqs", response_model=SqsRecord)
    def decompose(request: SqsRequest) -> SqsRecord:
        try:
            scene = request.scene.to_scene()
            if scene is None:
                raise ChainVqaError("the scene has no annotated objects", status_code=422)
            return build_sqs(request.question, scene, image_id=request.scene.image_id,
                             config=config.sqs)
        except ChainVqaError as exc:
            _raise_http(exc)

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest) -> PredictResponse:
        if models is None:
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
                                detail="no models loaded")
        try:
            record = SqsRecord(image_id=request.scene.image_id, question=request.question,
                               answers=[])
            if request.sqs_source == "gold":
                record = build_sqs(request.question, request.scene.to_scene(),
                                   image_id=request.scene.image_id, config=config.sqs)
            sample = Sample(record, request.scene.to_regions(), request.scene.to_scene())
            result = infer(sample, models, sqs_source=request.sqs_source)
        except ChainVqaError as exc:
            _raise_http(exc)
        return PredictResponse(
            image_id=record.image_id,
            question=record.question,
            prediction=result.result.answer,
            sqs=[sq for sq, _ in result.sqs],
            dialogue=result.dialogue,
        )

    logger.info("Inference routes mounted: /healthz, /version, /sqs, /predict")
    return app

