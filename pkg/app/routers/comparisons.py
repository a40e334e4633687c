"""Comparison batch endpoints"""

import logging
import random
import string
from typing import Optional

from fastapi import APIRouter, BackgroundTasks, HTTPException, Query, status

from app import config
from app.harness import UsageError, resolve_batch, run_comparison
from app.job_manager import job_manager
from app.models import (
    ComparisonRequest,
    ExperimentPreset,
    JobListResponse,
    JobResponse,
    JobStatus,
    JobStatusRecord,
    PresetOverrides,
)
from app.presets import UnknownPresetError, apply_overrides, get_preset

logger = logging.getLogger(__name__)

router = APIRouter()


def generate_id(prefix: str = "job") -> str:
    """Generate a random ID"""
    random_part = "".join(random.choices(string.ascii_lowercase + string.digits, k=12))
    return f"{prefix}_{random_part}"


def process_comparison(job_id: str, preset: ExperimentPreset, request: ComparisonRequest) -> None:
    """Background task running one comparison batch

    Args:
        job_id: Job ID for tracking
        preset: Preset with the request's overrides applied
        request: Original request (methods and seeds)
    """
    try:
        job_manager.update_job_status(job_id, JobStatus.processing)
        summary = run_comparison(
            preset,
            methods=request.methods,
            seeds=request.seeds,
            out_dir=config.OUTPUT_DIR,
            threads=config.DEFAULT_THREADS,
            strict=config.STRICT_THEOREM,
            parallel_runs=config.MAX_PARALLEL_RUNS,
        )
        job_manager.update_job_status(job_id, JobStatus.completed, result=summary.model_dump(mode="json"))
        logger.info(f"✓ Job {job_id} completed")
    except Exception as e:
        logger.error(f"❌ Job {job_id} failed: {e}")
        job_manager.update_job_status(job_id, JobStatus.failed, error=str(e))


@router.post("", response_model=JobResponse, status_code=status.HTTP_202_ACCEPTED)
def create_comparison(request: ComparisonRequest, background_tasks: BackgroundTasks):
    """
    Launch a comparison batch

    Runs every (method, seed) pair of a preset in the background and writes the
    CSV traces, manifests and summary.csv under the output directory. Resolving
    the batch builds the problem, so this handler runs in the threadpool.

    **Tip:** Poll GET /comparisons/{job_id} until status is completed or failed.
    """
    try:
        preset = get_preset(request.preset)
    except UnknownPresetError as e:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail={"error": "Preset not found", "message": str(e.args[0])},
        )
    if request.iterations is not None:
        preset = apply_overrides(preset, PresetOverrides(iterations=request.iterations))

    try:
        resolve_batch(preset, request.methods, request.seeds)
    except UsageError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail={"error": "Invalid comparison", "message": str(e)},
        )

    job_id = generate_id("job")
    job_manager.create_job(job_id, preset.name)
    background_tasks.add_task(process_comparison, job_id, preset, request)

    return JobResponse(
        jobId=job_id,
        status=JobStatus.pending,
        message=f"Comparison queued: {len(request.methods)} methods on {preset.name}",
    )


@router.get("/{job_id}", response_model=JobStatusRecord)
async def get_comparison(job_id: str):
    """
    Get comparison job status

    **Status Values:**
    - `pending` - Job queued, waiting to process
    - `processing` - Runs are executing
    - `completed` - Summary available in the result field
    - `failed` - Error occurred (check error field)
    """
    job = job_manager.get_job(job_id)
    if not job:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail={"error": "Job not found", "message": f"Job {job_id} not found"},
        )
    return job


@router.get("", response_model=JobListResponse)
async def list_comparisons(preset: Optional[str] = Query(None, description="Only jobs of this preset")):
    """List comparison jobs, newest first"""
    return JobListResponse(jobs=job_manager.list_jobs(preset))
