"""Parameter server: registry, per-round selection, weighted aggregation.

One orchestrator task owns the round state machine; connection tasks
only decode frames and forward them over a queue, so no round state is
shared across tasks.  Each round: broadcast the current global model
with per-client selection flags, collect updates until every selected
client replied or the deadline passed, aggregate whatever arrived
(at least one update), evaluate on the held-out test set, then
broadcast the new model to everyone.

A round with zero updates is retried once with a fresh selection and
then fails the run.
"""

from __future__ import annotations

import asyncio
import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import websockets
from websockets.asyncio.server import ServerConnection, serve
from websockets.exceptions import NegotiationError

from . import nn
from .data import ClientDataset
from .errors import (
    AggregationError,
    DimensionError,
    ProtocolError,
    RoundFailedError,
)
from .proto import (
    WS_SUBPROTOCOL,
    WS_PATH,
    GlobalModel,
    LocalUpdate,
    Register,
    RegisterAck,
    RoundMetrics,
    Shutdown,
    TaskConfig,
    decode,
    encode,
)
from .seeds import TAG_INIT, TAG_SELECT, mix, rng_from

logger = logging.getLogger(__name__)

CLOSE_DUPLICATE = 4409
CLOSE_PROTOCOL = 4400


@dataclass
class ClientRecord:
    client_id: str
    client_index: int
    num_samples: int
    connection: Optional[ServerConnection] = None
    status: str = "connected"  # or "departed"

    @property
    def eligible(self) -> bool:
        return self.status == "connected" and self.num_samples >= 1


@dataclass
class RoundRecord:
    round: int
    accuracy: float
    loss: float
    wall_time_seconds: float
    num_updates_received: int


@dataclass
class RoundState:
    round: int
    phase: str = "Broadcasting"  # -> Collecting -> Aggregating -> Done
    selected: frozenset = frozenset()
    received: dict = field(default_factory=dict)
    deadline: float = 0.0

    _ORDER = ("Broadcasting", "Collecting", "Aggregating", "Done")

    def advance(self, phase: str) -> None:
        if self._ORDER.index(phase) < self._ORDER.index(self.phase):
            raise RuntimeError(f"phase cannot move back: {self.phase} -> {phase}")
        self.phase = phase


def select_clients(
    registry: Iterable[ClientRecord], m: int, seed: int, round_index: int, attempt: int = 0
) -> frozenset[int]:
    """Uniform sample without replacement of min(m, connected) indices."""
    eligible = sorted(rec.client_index for rec in registry if rec.eligible)
    if not eligible:
        raise ProtocolError(f"round {round_index}: no connected eligible clients")
    k = min(m, len(eligible))
    rng = rng_from(mix(seed, TAG_SELECT, round_index, attempt))
    chosen = rng.choice(len(eligible), size=k, replace=False)
    return frozenset(eligible[i] for i in chosen)


def aggregate(updates: Sequence[tuple[int, nn.WeightsBundle]]) -> nn.WeightsBundle:
    """Sample-count-weighted coordinate mean with 64-bit accumulation.

    Updates are summed in a content-sorted order so the result is exactly
    permutation invariant regardless of arrival order.
    """
    if not updates:
        raise AggregationError("no updates to aggregate")
    for num_samples, _ in updates:
        if num_samples < 1:
            raise AggregationError(f"update with num_samples={num_samples}")
    first = updates[0][1]
    for _, bundle in updates[1:]:
        if not bundle.same_structure(first):
            raise DimensionError("updates have mismatching tensor structures")
    ordered = sorted(
        updates,
        key=lambda u: (u[0], b"".join(a.tobytes() for _, a in u[1])),
    )
    total = float(sum(n for n, _ in ordered))
    acc = np.zeros(first.to_vector().shape, dtype=np.float64)
    for num_samples, bundle in ordered:
        acc += float(num_samples) * bundle.to_vector().astype(np.float64)
    mean = (acc / total).astype(np.float32)
    items, off = [], 0
    for name, arr in first:
        items.append((name, mean[off : off + arr.size].reshape(arr.shape).copy()))
        off += arr.size
    return nn.WeightsBundle._wrap(items)


def initial_global_model(task: TaskConfig) -> nn.WeightsBundle:
    """The round-zero model every transport starts from."""
    return nn.init_weights(
        nn.model_spec(task.architecture_id), mix(task.hyper.seed, TAG_INIT)
    )


def metrics_csv(records: Sequence[RoundRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["round", "accuracy", "loss", "wall_time_seconds", "num_updates_received"])
    for r in records:
        writer.writerow(
            [r.round, f"{r.accuracy:.6f}", f"{r.loss:.6f}",
             f"{r.wall_time_seconds:.3f}", r.num_updates_received]
        )
    return buf.getvalue()


class FederationServer:
    """Runs one task to completion over a WebSocket endpoint."""

    def __init__(
        self,
        task: TaskConfig,
        test_set: ClientDataset,
        *,
        min_clients: Optional[int] = None,
        round_timeout: float = 120.0,
        host: str = "127.0.0.1",
        port: int = 0,
        metrics_path: Optional[Path] = None,
        serve_ui: Optional[Path] = None,
    ):
        self.task = task
        self.test_set = test_set
        self.min_clients = task.clients_per_round if min_clients is None else min_clients
        self.round_timeout = round_timeout
        self.host = host
        self.port = port
        self.metrics_path = metrics_path
        self.serve_ui = Path(serve_ui).resolve() if serve_ui is not None else None
        self.registry: dict[str, ClientRecord] = {}
        self.records: list[RoundRecord] = []
        self.global_model = initial_global_model(task)
        self._inbox: asyncio.Queue = asyncio.Queue()
        self._server = None

    # -- connection plumbing ------------------------------------------------

    def _by_index(self, index: int) -> Optional[ClientRecord]:
        for rec in self.registry.values():
            if rec.client_index == index:
                return rec
        return None

    async def _handler(self, connection: ServerConnection) -> None:
        try:
            raw = await asyncio.wait_for(connection.recv(), timeout=30.0)
            msg = decode(raw)
        except Exception as exc:
            logger.warning("registration failed: %s", exc)
            await connection.close(CLOSE_PROTOCOL, "expected a register frame")
            return
        if not isinstance(msg, Register):
            await connection.close(CLOSE_PROTOCOL, "expected a register frame")
            return

        record = self.registry.get(msg.client_id)
        if record is not None and record.status == "connected":
            logger.warning("duplicate registration for %s refused", msg.client_id)
            await connection.close(CLOSE_DUPLICATE, "client_id already connected")
            return
        if record is not None:
            if msg.num_samples != record.num_samples:
                await connection.close(
                    CLOSE_PROTOCOL, "num_samples differs from first registration"
                )
                return
            record.connection = connection
            record.status = "connected"
            logger.info("client %s reattached as index %d", msg.client_id, record.client_index)
        else:
            record = ClientRecord(
                client_id=msg.client_id,
                client_index=len(self.registry),
                num_samples=msg.num_samples,
                connection=connection,
            )
            self.registry[msg.client_id] = record
            logger.info(
                "client %s registered as index %d (%d samples)",
                msg.client_id, record.client_index, msg.num_samples,
            )
        await connection.send(encode(RegisterAck(client_index=record.client_index, task=self.task)))
        await self._inbox.put(("join", record.client_index, None))

        try:
            async for frame in connection:
                try:
                    inbound = decode(frame)
                except Exception as exc:
                    logger.warning("client %s sent a bad frame: %s", msg.client_id, exc)
                    await connection.close(CLOSE_PROTOCOL, str(exc)[:100])
                    break
                await self._inbox.put(("message", record.client_index, inbound))
        finally:
            if record.connection is connection:
                record.status = "departed"
                record.connection = None
                await self._inbox.put(("leave", record.client_index, None))

    def _process_request(self, connection: ServerConnection, request):
        if request.headers.get("Upgrade", "").lower() == "websocket":
            if request.path != WS_PATH:
                return connection.respond(404, "unknown websocket path\n")
            return None
        if request.path == "/healthz":
            return connection.respond(200, "ok")
        if request.path == "/metrics.csv":
            from websockets.datastructures import Headers
            from websockets.http11 import Response

            body = metrics_csv(self.records).encode()
            headers = Headers(
                [("Content-Type", "text/csv"), ("Content-Length", str(len(body)))]
            )
            return Response(200, "OK", headers, body)
        if self.serve_ui is not None:
            return self._serve_static(connection, request.path)
        return connection.respond(404, "not found\n")

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript",
        ".css": "text/css",
        ".map": "application/json",
        ".json": "application/json",
        ".svg": "image/svg+xml",
    }

    def _serve_static(self, connection: ServerConnection, path: str):
        from websockets.datastructures import Headers
        from websockets.http11 import Response

        rel = path.lstrip("/") or "index.html"
        target = (self.serve_ui / rel).resolve()
        if not target.is_relative_to(self.serve_ui) or not target.is_file():
            return connection.respond(404, "not found\n")
        body = target.read_bytes()
        content_type = self._CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        headers = Headers(
            [("Content-Type", content_type), ("Content-Length", str(len(body)))]
        )
        return Response(200, "OK", headers, body)

    def _select_subprotocol(self, connection: ServerConnection, offered):
        if WS_SUBPROTOCOL not in offered:
            raise NegotiationError(f"client must speak {WS_SUBPROTOCOL}")
        return WS_SUBPROTOCOL

    async def _send_to(self, record: ClientRecord, frame: str) -> None:
        if record.connection is None:
            return
        try:
            await record.connection.send(frame)
        except websockets.WebSocketException:
            logger.warning("send to client %d failed", record.client_index)

    async def _broadcast(self, msg) -> None:
        frame = encode(msg)
        for record in list(self.registry.values()):
            if record.status == "connected":
                await self._send_to(record, frame)

    # -- orchestration ------------------------------------------------------

    async def _wait_for_clients(self) -> None:
        while sum(1 for r in self.registry.values() if r.status == "connected") < self.min_clients:
            await self._inbox.get()

    def _validate_update(self, state: RoundState, index: int, msg: LocalUpdate) -> Optional[str]:
        record = self._by_index(index)
        if record is None or msg.client_id != record.client_id:
            return "client_id does not match the registered connection"
        if index not in state.selected:
            return "client was not selected this round"
        if msg.round != state.round:
            return f"stale round {msg.round} (current {state.round})"
        if msg.num_samples != record.num_samples:
            return "num_samples differs from registration"
        if index in state.received:
            return "duplicate update for this round"
        if not msg.weights.matches_spec(nn.model_spec(self.task.architecture_id)):
            return "weights do not match the task architecture"
        return None

    async def _collect(self, state: RoundState) -> None:
        state.advance("Collecting")
        while len(state.received) < len(state.selected):
            remaining = state.deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                kind, index, msg = await asyncio.wait_for(self._inbox.get(), timeout=remaining)
            except asyncio.TimeoutError:
                break
            if kind != "message" or not isinstance(msg, LocalUpdate):
                continue
            problem = self._validate_update(state, index, msg)
            if problem is not None:
                logger.warning("round %d: rejecting update from %d: %s", state.round, index, problem)
                continue
            state.received[index] = (msg.num_samples, msg.weights)

    async def run_round(self, round_index: int) -> RoundRecord:
        started = time.monotonic()
        state = None
        for attempt in (0, 1):
            selected = select_clients(
                self.registry.values(), self.task.clients_per_round,
                self.task.hyper.seed, round_index, attempt,
            )
            state = RoundState(
                round=round_index, selected=selected,
                deadline=time.monotonic() + self.round_timeout,
            )
            logger.info("round %d (attempt %d): selected %s", round_index, attempt, sorted(selected))
            for record in list(self.registry.values()):
                if record.status == "connected":
                    await self._send_to(
                        record,
                        encode(GlobalModel(
                            round=round_index,
                            selected=record.client_index in selected,
                            weights=self.global_model,
                        )),
                    )
            await self._collect(state)
            if state.received:
                break
            logger.warning("round %d attempt %d: no updates", round_index, attempt)
        if not state.received:
            raise RoundFailedError(f"round {round_index}: no updates after retry")

        state.advance("Aggregating")
        self.global_model = aggregate(list(state.received.values()))
        loop = asyncio.get_running_loop()
        accuracy, loss = await loop.run_in_executor(
            None, nn.evaluate, self.global_model, self.test_set
        )
        await self._broadcast(RoundMetrics(round=round_index, accuracy=accuracy, loss=loss))
        await self._broadcast(GlobalModel(round=round_index, selected=False, weights=self.global_model))
        state.advance("Done")
        record = RoundRecord(
            round=round_index,
            accuracy=accuracy,
            loss=loss,
            wall_time_seconds=time.monotonic() - started,
            num_updates_received=len(state.received),
        )
        self.records.append(record)
        logger.info("round %d done: accuracy %.4f loss %.4f (%d updates)",
                    round_index, accuracy, loss, record.num_updates_received)
        return record

    async def run(self) -> tuple[nn.WeightsBundle, list[RoundRecord]]:
        """Serve until T rounds complete; returns the final global model."""
        async with serve(
            self._handler,
            self.host,
            self.port,
            subprotocols=[WS_SUBPROTOCOL],
            select_subprotocol=self._select_subprotocol,
            process_request=self._process_request,
            max_size=None,
        ) as server:
            self._server = server
            self.port = server.sockets[0].getsockname()[1]
            logger.info("serving ws://%s:%d%s", self.host, self.port, WS_PATH)
            try:
                await self._wait_for_clients()
                for t in range(1, self.task.rounds_total + 1):
                    await self.run_round(t)
            finally:
                await self._broadcast(Shutdown())
                if self.metrics_path is not None:
                    Path(self.metrics_path).write_text(metrics_csv(self.records))
                # give clients a moment to close on their side
                await asyncio.sleep(0.05)
        return self.global_model, self.records
