"""Minimal thread-backed job registry for long-running optimizations."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass


@dataclass
class Job:
    job_id: str
    status: str = "queued"   # queued | running | done | error
    result: object = None
    error: str | None = None


class JobRegistry:
    def __init__(self):
        self._jobs: dict = {}
        self._lock = threading.Lock()

    def submit(self, fn) -> str:
        job = Job(job_id=uuid.uuid4().hex[:12])
        with self._lock:
            self._jobs[job.job_id] = job

        def worker():
            with self._lock:
                job.status = "running"
            try:
                result = fn()
            except Exception as exc:  # surfaced through the job status
                with self._lock:
                    job.status = "error"
                    job.error = f"{type(exc).__name__}: {exc}"
                return
            with self._lock:
                job.result = result
                job.status = "done"

        threading.Thread(target=worker, daemon=True).start()
        return job.job_id

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)
