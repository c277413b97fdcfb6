"""
FastAPI application for the CAN translation toolkit.
Provides RESTful endpoints that run the analysis pipeline on a posted capture.
"""

import os
import sys
import logging
from typing import Any, Dict, List, Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

# Add project `src` directory to path so package imports work
sys.path.append(os.path.normpath(os.path.join(os.path.dirname(__file__), '..', '..')))

from can_translation import __version__
from can_translation.analysis_pipeline import AnalysisReport, CanTranslator
from can_translation.config import build_analysis_config, load_config
from can_translation.data.canio import parse_log
from can_translation.dbc_writer import emit_dbc
from can_translation.errors import CanTranslationError, ConfigError, InvariantViolation

logger = logging.getLogger(__name__)


def load_api_config() -> Dict[str, Any]:
    """Host and port from config.json (defaults when the file is missing)."""
    config = load_config()
    return {"api_host": config["api_host"], "api_port": config["api_port"]}


# Pydantic models for request/response
class AnalyzeRequest(BaseModel):
    capture: str = Field(..., description="candump -l log text")
    alpha: Optional[float] = None
    min_points: Optional[int] = None
    interpolation: Optional[Literal["linear", "hold"]] = None
    diag_ranges: Optional[List[str]] = None
    anonymize_aids: bool = False


class CaptureStats(BaseModel):
    aid_count: int
    constant_fraction: Optional[float]
    matched_fraction: Optional[float]
    unknown_fraction: Optional[float]
    total_match_score: Optional[float]
    overall_match_score: Optional[float]


class AnalyzeResponse(BaseModel):
    schema_version: int = Field(..., alias="schema")
    stats: CaptureStats
    report: Dict[str, Any]

    model_config = {"populate_by_name": True}


# Initialize FastAPI app
app = FastAPI(
    title="CAN Translation API",
    description="API for recovering CAN signal definitions from captures with OBD-II diagnostics",
    version=__version__
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def run_analysis(request: AnalyzeRequest) -> AnalysisReport:
    """
    Parse the posted capture and run the pipeline.

    Raises:
        HTTPException: 422 for invalid settings, 400 for unusable captures,
            500 for internal consistency failures
    """
    try:
        config = build_analysis_config({
            "alpha": request.alpha,
            "min_points": request.min_points,
            "interpolation": request.interpolation,
            "diag_ranges": request.diag_ranges,
            # requests are handled inline
            "workers": 1,
        })
        capture = parse_log(request.capture, source="<request>",
                            malformed_ratio_limit=config.malformed_ratio_limit)
        return CanTranslator(config).analyze_capture(capture)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except InvariantViolation as exc:
        logger.error("analysis invariant failed: %s", exc)
        raise HTTPException(status_code=500, detail=str(exc))
    except CanTranslationError as exc:
        raise HTTPException(status_code=400, detail=f"{type(exc).__name__}: {exc}")


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze_capture(request: AnalyzeRequest):
    """
    Analyze a capture.

    Args:
        request: Capture text plus optional analysis overrides

    Returns:
        Capture statistics and the full report
    """
    report = run_analysis(request).to_dict(anonymize=request.anonymize_aids)
    return AnalyzeResponse(schema=report["schema"], stats=CaptureStats(**report["stats"]),
                           report=report)


@app.post("/dbc", response_class=PlainTextResponse)
def dbc_fragment(request: AnalyzeRequest):
    """Analyze a capture and return the recovered DBC fragment."""
    report = run_analysis(request).to_dict(anonymize=request.anonymize_aids)
    return emit_dbc(report)


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy", "message": "CAN Translation API is running",
            "version": __version__}


if __name__ == "__main__":
    import uvicorn

    # Load API configuration
    api_config = load_api_config()
    uvicorn.run(app, host=api_config["api_host"], port=api_config["api_port"])
