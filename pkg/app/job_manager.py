"""Job management for background comparison batches"""

import logging
import threading
import time
from pathlib import Path
from typing import Dict, List, Optional, Union

from app.config import JOBS_DIR
from app.models import JobStatus, JobStatusRecord
from app.storage import TraceStorageError, write_json

logger = logging.getLogger(__name__)


class JobManager:
    """In-memory job status manager with a JSON copy of every record on disk"""

    def __init__(self, jobs_dir: Optional[Union[str, Path]] = JOBS_DIR):
        """
        Initialize job manager

        Args:
            jobs_dir: Directory receiving `<job_id>.json` snapshots (None keeps jobs in memory only)
        """
        self.jobs: Dict[str, JobStatusRecord] = {}
        self.jobs_dir = Path(jobs_dir) if jobs_dir else None
        self._lock = threading.Lock()

    def _persist(self, job: JobStatusRecord) -> None:
        if self.jobs_dir is None:
            return
        try:
            write_json(self.jobs_dir / f"{job.jobId}.json", job.model_dump(mode="json"))
        except TraceStorageError as e:
            logger.warning(f"⚠️  Could not persist job {job.jobId}: {e}")

    def create_job(self, job_id: str, preset: str) -> JobStatusRecord:
        """
        Create a new job

        Args:
            job_id: Unique job ID
            preset: Preset the batch runs

        Returns:
            Created job record
        """
        job = JobStatusRecord(
            jobId=job_id,
            status=JobStatus.pending,
            preset=preset,
            createdAt=int(time.time() * 1000),
        )
        with self._lock:
            self.jobs[job_id] = job
        self._persist(job)
        return job

    def get_job(self, job_id: str) -> Optional[JobStatusRecord]:
        """
        Get job by ID

        Args:
            job_id: Job ID to retrieve

        Returns:
            Job record if found, None otherwise
        """
        return self.jobs.get(job_id)

    def update_job_status(
        self,
        job_id: str,
        status: JobStatus,
        error: Optional[str] = None,
        result: Optional[Dict] = None,
    ) -> Optional[JobStatusRecord]:
        """
        Update job status

        Args:
            job_id: Job ID to update
            status: New status
            error: Error message if failed
            result: Comparison summary if completed

        Returns:
            Updated job record if found, None otherwise
        """
        with self._lock:
            job = self.jobs.get(job_id)
            if not job:
                return None

            job.status = status

            if status == JobStatus.processing and job.startedAt is None:
                job.startedAt = int(time.time() * 1000)

            if status in [JobStatus.completed, JobStatus.failed]:
                job.completedAt = int(time.time() * 1000)

            if error:
                job.error = error

            if result:
                job.result = result

        self._persist(job)
        return job

    def list_jobs(self, preset: Optional[str] = None) -> List[JobStatusRecord]:
        """
        List jobs, newest first

        Args:
            preset: Only jobs of this preset

        Returns:
            List of job records
        """
        jobs = [job for job in self.jobs.values() if preset is None or job.preset == preset]
        return sorted(jobs, key=lambda job: job.createdAt, reverse=True)


# Global job manager instance
job_manager = JobManager()
