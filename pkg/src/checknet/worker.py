"""Simulated untrusted third party.

A worker only ever holds the public network.  Besides running it honestly it
can mount the three attacks used for evaluation:

* random   - return a draw from per-node Gaussians fitted to honest outputs;
* targeted - run inference, then push ``n`` random nodes above ``max(y)``;
* replay   - return a cached honest output computed for a different input.

The wire mode serves the same behaviours over newline-delimited JSON on a
local TCP socket: request ``{"id", "x"}``, response ``{"id", "y"}``.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass

import numpy as np

from .public import PublicModel

KINDS = ("honest", "random", "targeted", "replay")
TARGET_MARGIN = 0.05


class WorkerError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorkerBehavior:
    kind: str
    n: int = 1  # nodes raised by the targeted attack

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown behaviour {self.kind!r}; expected one of {KINDS}")
        if self.kind == "targeted" and self.n < 1:
            raise ValueError("targeted attack needs n >= 1")

    def validate(self, n_outputs: int) -> None:
        if self.kind == "targeted" and self.n > n_outputs:
            raise ValueError(f"targeted n={self.n} exceeds N_o={n_outputs}")


@dataclass(frozen=True)
class OutputStats:
    mean: np.ndarray
    std: np.ndarray


def fit_output_stats(outputs) -> OutputStats:
    y = np.asarray(outputs, dtype=np.float64)
    if y.ndim != 2 or len(y) < 2:
        raise WorkerError("need at least two honest outputs to fit the random attack")
    return OutputStats(y.mean(axis=0), y.std(axis=0))


def honest(model: PublicModel, x) -> np.ndarray:
    return model.forward(x)


def random_attack(stats: OutputStats | None, rng: np.random.Generator) -> np.ndarray:
    if stats is None:
        raise WorkerError("random attack requires fitted output statistics")
    return stats.mean + stats.std * rng.standard_normal(stats.mean.shape)


def raise_nodes(y, nodes) -> np.ndarray:
    """Set ``nodes`` to ``max(y)`` plus 5% of the output range."""
    y = np.asarray(y, dtype=np.float64)
    out = y.copy()
    out[list(nodes)] = y.max() + TARGET_MARGIN * (y.max() - y.min())
    return out


def targeted_attack(model: PublicModel, x, n: int, rng: np.random.Generator) -> np.ndarray:
    y = model.forward(x)
    if not 0 <= n <= len(y):
        raise WorkerError(f"targeted n={n} outside [0, {len(y)}]")
    if n == 0:
        return y
    return raise_nodes(y, rng.choice(len(y), size=n, replace=False))


@dataclass
class ReplayCache:
    ids: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)


def replay_attack(cache: ReplayCache | None, sample_id: int, rng: np.random.Generator) -> np.ndarray:
    """Return the cached output of a uniformly chosen *other* sample."""
    if cache is None:
        raise WorkerError("replay attack requires a cache of honest outputs")
    others = np.flatnonzero(cache.ids != sample_id)
    if len(others) == 0:
        raise WorkerError("replay cache holds no output for a different sample")
    return cache.outputs[others[rng.integers(len(others))]].copy()


class Worker:
    """In-process worker with one fixed behaviour and its own random stream."""

    def __init__(self, model: PublicModel, behavior: WorkerBehavior, rng: np.random.Generator,
                 stats: OutputStats | None = None, cache: ReplayCache | None = None):
        behavior.validate(model.output_dim)
        if behavior.kind == "random" and stats is None:
            raise WorkerError("random worker needs output statistics")
        if behavior.kind == "replay" and cache is None:
            raise WorkerError("replay worker needs a cache")
        self.model = model
        self.behavior = behavior
        self.rng = rng
        self.stats = stats
        self.cache = cache
        self._lock = threading.Lock()

    def respond(self, sample_id: int, x) -> np.ndarray:
        kind = self.behavior.kind
        with self._lock:
            if kind == "honest":
                return honest(self.model, x)
            if kind == "random":
                return random_attack(self.stats, self.rng)
            if kind == "targeted":
                return targeted_attack(self.model, x, self.behavior.n, self.rng)
            return replay_attack(self.cache, sample_id, self.rng)


# ---------------------------------------------------------------------------
# wire mode


def encode_request(sample_id: int, x) -> bytes:
    return (json.dumps({"id": int(sample_id), "x": [float(v) for v in x]}) + "\n").encode()


def encode_response(sample_id: int, y) -> bytes:
    return (json.dumps({"id": int(sample_id), "y": [float(v) for v in y]}) + "\n").encode()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        worker: Worker = self.server.worker
        for line in self.rfile:
            if not line.strip():
                continue
            sample_id = None
            try:
                msg = json.loads(line)
                sample_id = int(msg["id"])
                y = worker.respond(sample_id, np.asarray(msg["x"], dtype=np.float64))
                self.wfile.write(encode_response(sample_id, y))
            except Exception as exc:  # report and keep serving
                err = {"id": sample_id, "error": f"{type(exc).__name__}: {exc}"}
                self.wfile.write((json.dumps(err) + "\n").encode())
            self.wfile.flush()


class WorkerServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, worker: Worker, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.worker = worker

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "WorkerServer":
        threading.Thread(target=self.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self.shutdown()
        super().__exit__(*exc)


class RemoteWorker:
    """Client side of the wire protocol; speaks to one :class:`WorkerServer`."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.reader = self.sock.makefile("rb")

    def respond(self, sample_id: int, x) -> np.ndarray:
        self.sock.sendall(encode_request(sample_id, x))
        line = self.reader.readline()
        if not line:
            raise WorkerError("worker closed the connection")
        msg = json.loads(line)
        if "error" in msg:
            raise WorkerError(f"worker error: {msg['error']}")
        if msg.get("id") != int(sample_id):
            raise WorkerError(f"response id {msg.get('id')} does not match request {sample_id}")
        return np.asarray(msg["y"], dtype=np.float64)

    def close(self) -> None:
        self.reader.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
