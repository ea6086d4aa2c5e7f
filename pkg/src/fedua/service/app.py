"""HTTP service exposing the training and authentication pipeline.

Paths in requests are interpreted on the server's filesystem; the service
is a workspace runner, not a data-upload API.  Domain errors map to 400
with a human-readable detail string.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..errors import FeduaError
from . import schemas

app = FastAPI(title="fedua", version=__version__,
              description="Federated training of user-authentication models "
                          "with random binary embeddings")


@app.exception_handler(FeduaError)
async def domain_error_handler(request: Request, exc: FeduaError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(ValueError)
async def value_error_handler(request: Request, exc: ValueError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(FileNotFoundError)
async def missing_file_handler(request: Request, exc: FileNotFoundError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": f"file not found: {exc}"})


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/codebook/size", response_model=schemas.SizeCodebookResponse)
def size_codebook(req: schemas.SizeCodebookRequest) -> schemas.SizeCodebookResponse:
    return pipeline.size_codebook(req)


@app.post("/data/generate", response_model=schemas.GenerateDataResponse)
def generate_data(req: schemas.GenerateDataRequest) -> schemas.GenerateDataResponse:
    return pipeline.generate_data(req)


@app.post("/train", response_model=schemas.TrainResponse)
def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    return pipeline.train(req)


@app.post("/calibrate", response_model=schemas.CalibrateResponse)
def calibrate(req: schemas.CalibrateRequest) -> schemas.CalibrateResponse:
    return pipeline.calibrate(req)


@app.post("/authenticate", response_model=schemas.AuthenticateResponse)
def authenticate(req: schemas.AuthenticateRequest) -> schemas.AuthenticateResponse:
    return pipeline.authenticate(req)


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    return pipeline.evaluate(req)
