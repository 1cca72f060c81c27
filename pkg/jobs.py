# jobs.py
from __future__ import annotations

import threading
import time
import uuid
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict


@dataclass
class CellState:
    method: str
    n: int
    r: int
    m: int
    trials: int = 0
    done: int = 0
    successes: int = 0


Listener = Callable[[dict[str, Any]], None]


class JobStore:
    """
    In-memory progress of running sweeps. Trials complete in the main process
    (workers only compute), so the lock guards against listeners reading snapshots
    from other threads.
    """

    def __init__(self) -> None:
        self.jobs: Dict[str, Dict[str, Any]] = {}
        self.lock = threading.Lock()

    def create_job(self, meta: dict[str, Any]) -> str:
        job_id = uuid.uuid4().hex[:10]
        with self.lock:
            self.jobs[job_id] = {
                "id": job_id,
                "created_at": time.time(),
                "status": "created",  # created|running|done|error
                "meta": meta,
                "cells": {},          # "method:n:r:m" -> CellState (as dict)
                "listeners": [],
                "progress": {"total": 0, "done": 0, "failures": 0},
            }
        return job_id

    def subscribe(self, job_id: str, listener: Listener) -> None:
        with self.lock:
            self.jobs[job_id]["listeners"].append(listener)

    def emit(self, job_id: str, event: dict[str, Any]) -> None:
        for listener in list(self.jobs[job_id]["listeners"]):
            listener(event)

    def set_status(self, job_id: str, status: str) -> None:
        with self.lock:
            self.jobs[job_id]["status"] = status
        self.emit(job_id, {"type": "job_status", "status": status})

    def add_cell(self, job_id: str, cell: CellState) -> None:
        key = f"{cell.method}:{cell.n}:{cell.r}:{cell.m}"
        with self.lock:
            self.jobs[job_id]["cells"][key] = asdict(cell)
            self.jobs[job_id]["progress"]["total"] += cell.trials

    def record_trial(self, job_id: str, method: str, n: int, r: int, m: int, success: bool) -> None:
        key = f"{method}:{n}:{r}:{m}"
        with self.lock:
            job = self.jobs[job_id]
            cell = job["cells"][key]
            cell["done"] += 1
            cell["successes"] += int(success)
            job["progress"]["done"] += 1
            job["progress"]["failures"] += int(not success)
            progress = dict(job["progress"])
        self.emit(job_id, {"type": "progress", "progress": progress, "cell": key})

    def get_snapshot(self, job_id: str) -> dict[str, Any]:
        with self.lock:
            job = self.jobs[job_id]
            return {
                "id": job["id"],
                "status": job["status"],
                "meta": job["meta"],
                "progress": dict(job["progress"]),
                "cells": {k: dict(v) for k, v in job["cells"].items()},
            }


JOB_STORE = JobStore()
