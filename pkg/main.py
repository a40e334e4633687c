"""
DORE Simulator API - FastAPI Implementation
Launch and track compressed distributed SGD comparison batches over HTTP
"""

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from datetime import datetime, timezone
from contextlib import asynccontextmanager
import logging

from app import config
from app.routers import comparisons, presets

# Version
VERSION = "1.0.0"

logger = logging.getLogger("app.main")


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan handler"""
    # Startup
    config.configure_logging()
    logger.info(f"🚀 DORE Simulator API v{VERSION} starting...")
    config.log_configuration_summary()
    yield
    # Shutdown
    logger.info("👋 DORE Simulator API shutting down...")


# Create FastAPI app
app = FastAPI(
    title="DORE Simulator API",
    description="""
Simulation API for communication-compressed distributed SGD.

This API runs comparison batches of the simulator in the background:
- Experiment presets (ridge, L1-regularized ridge, logistic, nonconvex surrogate)
- Methods: PSGD, QSGD, MEM-SGD, DIANA, DoubleSqueeze (p-norm and top-k), DORE, DORE-smooth
- Job status tracking for long-running batches
- CSV traces and JSON manifests written under the output directory

## Architecture
- **FastAPI Server**: Fast API responses, background task processing
- **Background Tasks**: One comparison batch per job
- **Local Storage**: `out/<preset>/<method>/seed<k>.csv` plus manifest sidecars
    """,
    version=VERSION,
    lifespan=lifespan,
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(presets.router, prefix="/presets", tags=["Presets"])
app.include_router(comparisons.router, prefix="/comparisons", tags=["Comparisons"])


# Health check endpoint
@app.get("/health", tags=["Health"])
async def health_check():
    """
    Health check endpoint

    Returns service health status and version information.
    """
    return {
        "status": "ok",
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "version": VERSION,
    }


# Root endpoint
@app.get("/", include_in_schema=False)
async def root():
    """Root endpoint - redirect to docs"""
    return {
        "message": "DORE Simulator API",
        "version": VERSION,
        "docs": "/docs",
        "openapi": "/openapi.json",
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=config.PORT,
        reload=config.ENVIRONMENT != "production",
    )
