"""Background jobs for long-running fits and evaluations.

Tickets live in process memory; job results (layouts, reports) are persisted
by the store, so a restart loses only the ticket bookkeeping, never results.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

from .errors import JobConflict, UnknownLayout


@dataclass(frozen=True)
class JobTicket:
    job_id: str
    kind: str
    state: str  # queued -> running -> done | failed
    progress: float
    result_ref: str | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "result_ref": self.result_ref,
            "error": self.error,
        }


class JobManager:
    def __init__(self, workers: int = 4):
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="job")
        self._lock = threading.Lock()
        self._tickets: dict[str, JobTicket] = {}
        self._exclusive: set[str] = set()

    def submit(
        self,
        kind: str,
        work: Callable[[], str],
        exclusive_key: str | None = None,
    ) -> JobTicket:
        """Queue `work`; its return value becomes the ticket's result_ref.

        An exclusive_key held by a queued/running job rejects new submissions
        with JobConflict until that job settles.
        """
        with self._lock:
            if exclusive_key is not None:
                if exclusive_key in self._exclusive:
                    raise JobConflict(f"a job holding {exclusive_key!r} is already in flight")
                self._exclusive.add(exclusive_key)
            ticket = JobTicket(job_id=uuid.uuid4().hex[:12], kind=kind, state="queued", progress=0.0)
            self._tickets[ticket.job_id] = ticket

        def run() -> None:
            self._update(ticket.job_id, state="running", progress=0.1)
            try:
                result_ref = work()
            except Exception as exc:
                self._update(ticket.job_id, state="failed", error=str(exc))
            else:
                self._update(ticket.job_id, state="done", progress=1.0, result_ref=result_ref)
            finally:
                if exclusive_key is not None:
                    with self._lock:
                        self._exclusive.discard(exclusive_key)

        self._pool.submit(run)
        return ticket

    def _update(self, job_id: str, **changes) -> None:
        with self._lock:
            cur = self._tickets[job_id]
            if "progress" in changes:
                changes["progress"] = max(cur.progress, changes["progress"])
            self._tickets[job_id] = replace(cur, **changes)

    def get(self, job_id: str) -> JobTicket:
        with self._lock:
            ticket = self._tickets.get(job_id)
        if ticket is None:
            raise UnknownLayout(f"no job {job_id!r}")
        return ticket

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
