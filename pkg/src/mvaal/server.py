"""HTTP oracle service: a persisted annotation queue behind a small JSON API.

The experiment loop posts annotation tasks to the queue and polls for labels;
the browser console (or any scripted client) reads pending tasks and submits
labels over HTTP. The two sides share nothing but the queue.
"""

from __future__ import annotations

import json
import os
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .synthdata import png_bytes


class AnnotationQueue:
    """Task queue with pending -> submitted transitions, persisted to JSON."""

    def __init__(self, path=None, num_classes=0, sampler_name=""):
        self._lock = threading.Lock()
        self.path = path
        self.num_classes = int(num_classes)
        self.sampler_name = sampler_name
        self.tasks = {}   # task id -> dict
        self.rounds = []  # {round, task_ids}
        self._next_id = 0
        if path and os.path.exists(path):
            self._load()

    def _load(self):
        with open(self.path) as fh:
            state = json.load(fh)
        self.tasks = {int(k): v for k, v in state["tasks"].items()}
        self.rounds = state["rounds"]
        self._next_id = state["next_id"]
        self.num_classes = state.get("num_classes", self.num_classes)
        self.sampler_name = state.get("sampler_name", self.sampler_name)

    def _persist(self):
        if not self.path:
            return
        state = {"tasks": self.tasks, "rounds": self.rounds,
                 "next_id": self._next_id, "num_classes": self.num_classes,
                 "sampler_name": self.sampler_name}
        tmp = f"{self.path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(state, fh)
        os.replace(tmp, self.path)

    def post_tasks(self, indices, kind):
        with self._lock:
            round_no = len(self.rounds)
            ids = []
            for sample_id in indices:
                tid = self._next_id
                self._next_id += 1
                self.tasks[tid] = {
                    "id": tid, "sample_id": int(sample_id), "kind": kind,
                    "choices": list(range(self.num_classes)),
                    "status": "pending", "label": None, "note": "",
                    "round": round_no,
                }
                ids.append(tid)
            self.rounds.append({"round": round_no, "task_ids": ids})
            self._persist()
            return ids

    def collect_labels(self, indices):
        wanted = {int(i) for i in indices}
        with self._lock:
            out = {}
            for t in self.tasks.values():
                if t["status"] == "submitted" and t["sample_id"] in wanted:
                    out[t["sample_id"]] = t["label"]
            return out

    def pending(self):
        with self._lock:
            return [dict(t) for t in sorted(self.tasks.values(), key=lambda t: t["id"])
                    if t["status"] == "pending"]

    def get(self, task_id):
        with self._lock:
            t = self.tasks.get(int(task_id))
            return dict(t) if t else None

    def submit(self, task_id, label, note=""):
        """Returns (status_code, task or error detail)."""
        with self._lock:
            t = self.tasks.get(int(task_id))
            if t is None:
                return 404, {"detail": f"unknown task {task_id}"}
            err = self._validate(t, label)
            if err:
                return 400, {"detail": err}
            label = self._canonical(t, label)
            if t["status"] == "submitted":
                if t["label"] == label:
                    return 200, dict(t)  # idempotent resubmission
                return 409, {"detail": "task already labeled",
                             "stored_label": t["label"]}
            t["status"] = "submitted"
            t["label"] = label
            t["note"] = note
            self._persist()
            return 200, dict(t)

    def _validate(self, task, label):
        choices = set(task["choices"])
        if task["kind"] == "multiclass":
            if not isinstance(label, int) or isinstance(label, bool):
                return "multiclass label must be an integer"
            if label not in choices:
                return f"label {label} not in choices {sorted(choices)}"
        elif task["kind"] == "multilabel":
            if not isinstance(label, list) or \
                    any(not isinstance(c, int) or isinstance(c, bool) for c in label):
                return "multilabel label must be a list of integers"
            if not set(label) <= choices:
                return f"labels {label} not within choices {sorted(choices)}"
        else:
            return f"task kind {task['kind']} cannot be annotated remotely"
        return None

    @staticmethod
    def _canonical(task, label):
        return sorted(set(label)) if task["kind"] == "multilabel" else label

    def progress(self):
        with self._lock:
            rounds = []
            for r in self.rounds:
                tasks = [self.tasks[t] for t in r["task_ids"]]
                done = sum(t["status"] == "submitted" for t in tasks)
                rounds.append({"round": r["round"], "total": len(tasks),
                               "submitted": done,
                               "status": "complete" if done == len(tasks) else "open"})
            current = rounds[-1] if rounds else None
            return {"sampler": self.sampler_name, "rounds": rounds,
                    "current": current,
                    "cumulative_submitted": sum(r["submitted"] for r in rounds)}


def _task_view(t):
    # never includes ground truth; only the annotator's own submission
    return {"id": t["id"], "sample_id": t["sample_id"], "kind": t["kind"],
            "choices": t["choices"], "status": t["status"],
            "label": t["label"] if t["status"] == "submitted" else None,
            "m1_url": f"/api/sample/{t['sample_id']}.png",
            "aux_url": f"/api/sample/{t['sample_id']}/aux.png"}


def create_app(queue: AnnotationQueue, dataset, static_dir=None) -> FastAPI:
    app = FastAPI(title="annotation oracle")

    @app.get("/api/rounds")
    def rounds():
        return queue.progress()["rounds"]

    @app.get("/api/progress")
    def progress():
        return queue.progress()

    @app.get("/api/tasks")
    def tasks(status: str = "pending"):
        if status == "pending":
            return [_task_view(t) for t in queue.pending()]
        with queue._lock:
            items = sorted(queue.tasks.values(), key=lambda t: t["id"])
        return [_task_view(t) for t in items if status in ("all", t["status"])]

    @app.get("/api/sample/{sample_id}.png")
    def sample_png(sample_id: int):
        if not 0 <= sample_id < dataset.n:
            return JSONResponse({"detail": "unknown sample"}, status_code=404)
        return Response(png_bytes(dataset.m1[sample_id, 0]), media_type="image/png")

    @app.get("/api/sample/{sample_id}/aux.png")
    def sample_aux_png(sample_id: int):
        if not 0 <= sample_id < dataset.n:
            return JSONResponse({"detail": "unknown sample"}, status_code=404)
        return Response(png_bytes(dataset.m2[sample_id, 0]), media_type="image/png")

    @app.post("/api/tasks/{task_id}/label")
    async def label(task_id: int, request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)
        if not isinstance(body, dict) or "label" not in body:
            return JSONResponse({"detail": "body must carry a 'label' field"},
                                status_code=400)
        code, payload = queue.submit(task_id, body["label"],
                                     note=str(body.get("note", "")))
        if code != 200:
            return JSONResponse(payload, status_code=code)
        return _task_view(payload)

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
