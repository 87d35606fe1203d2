"""FastAPI application exposing the toolkit.

Requests are the same documents the CLI consumes (the ``ConfigDocument``
pydantic model), responses are the runner's result models, so a document
that works on the command line works verbatim against the service.

Endpoints:

* ``GET  /health``      -- liveness and version
* ``GET  /families``    -- example documents, one per model family
* ``POST /check``       -- drift certificate and criteria report
* ``POST /qsd``         -- QSD oracle solution
* ``POST /fv``          -- one particle run with snapshots
* ``POST /experiment``  -- any harness experiment (synchronous; long
  grids belong on the CLI)
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .. import __version__, runner
from ..config import ConfigDocument
from ..errors import (
    ConditioningDegenerateError,
    ConfigError,
    ConvergenceError,
    ModelDefinitionError,
)
from . import examples

app = FastAPI(
    title="fvqsd",
    version=__version__,
    description="Fleming-Viot simulation and quasi-stationary distribution oracles",
)


class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/families")
def families() -> dict:
    """One complete example document per model family."""
    return examples.EXAMPLE_DOCUMENTS


def _guard(fn, doc):
    try:
        return fn(doc)
    except (ConfigError, ModelDefinitionError) as err:
        raise HTTPException(status_code=422, detail=str(err)) from err
    except ConditioningDegenerateError as err:
        raise HTTPException(status_code=422, detail=str(err)) from err
    except ConvergenceError as err:
        raise HTTPException(status_code=500, detail=str(err)) from err


@app.post("/check", response_model=runner.CheckResult)
def check(doc: ConfigDocument) -> runner.CheckResult:
    return _guard(runner.run_check, doc)


@app.post("/qsd", response_model=runner.QsdResult)
def qsd(doc: ConfigDocument) -> runner.QsdResult:
    return _guard(lambda d: runner.run_qsd(d)[0], doc)


@app.post("/fv", response_model=runner.FvResult)
def fv(doc: ConfigDocument) -> runner.FvResult:
    return _guard(lambda d: runner.run_fv(d)[0], doc)


@app.post("/experiment", response_model=runner.ExperimentResult)
def experiment(doc: ConfigDocument) -> runner.ExperimentResult:
    return _guard(lambda d: runner.experiment_result(runner.run_experiment(d)), doc)
