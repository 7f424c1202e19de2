"""Headless client: local training, LDP perturbation, upload loop.

One process embodies the data/training/privacy phases with strict
ordering per round: adopt the broadcast model, run local mini-batch
SGD, clip-and-perturb, upload.  All client-side randomness (shuffles,
noise) derives from the task's master seed plus the client index, so a
federation is replayable without coordination.
"""

from __future__ import annotations

import asyncio
import logging
import uuid
from dataclasses import dataclass, field
from typing import Optional

import websockets

from . import nn
from .data import ClientDataset
from .errors import DataError, ProtocolError, WebFedError
from .ldp import noise_seed, perturb
from .proto import (
    WS_SUBPROTOCOL,
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
from .seeds import TAG_SHUFFLE, mix, rng_from

logger = logging.getLogger(__name__)


def train_local(
    weights: nn.WeightsBundle,
    shard: ClientDataset,
    task: TaskConfig,
    client_index: int,
    round_index: int,
    seed_base: Optional[int] = None,
) -> tuple[nn.WeightsBundle, float]:
    """Run local_epochs of seeded mini-batch SGD over the shard.

    Returns the updated weights and the sample-mean training loss of the
    final epoch.  Shuffle order is Fisher-Yates keyed by
    (seed, client, round, epoch); a short final batch is kept.
    """
    if len(shard) == 0:
        raise DataError("cannot train on an empty shard")
    hyper = task.hyper
    seed = hyper.seed if seed_base is None else seed_base
    w = weights
    n = len(shard)
    epoch_loss = 0.0
    for epoch in range(hyper.local_epochs):
        order = rng_from(
            mix(seed, TAG_SHUFFLE, client_index, round_index, epoch)
        ).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, grads = nn.loss_and_grad(
                w, shard.images[idx], nn.one_hot(shard.labels[idx])
            )
            w = nn.sgd_step(w, grads, hyper.eta)
            loss_sum += loss * len(idx)
        epoch_loss = loss_sum / n
    return w, epoch_loss


@dataclass
class ClientState:
    """Protocol-visible state of one participating client."""

    client_id: str
    shard: ClientDataset
    task: Optional[TaskConfig] = None
    client_index: Optional[int] = None
    local_model: Optional[nn.WeightsBundle] = None
    round: int = 0
    seed_base: Optional[int] = None  # overrides the task seed when set
    last_train_loss: Optional[float] = None
    rounds_trained: int = 0
    metrics_log: list = field(default_factory=list)


def adopt_global(state: ClientState, msg: GlobalModel) -> bool:
    """Replace the local model with the broadcast weights.

    Returns True when this client should train and upload for msg.round.
    Older-round broadcasts are ignored with a warning.
    """
    if msg.round < state.round:
        logger.warning(
            "client %s: ignoring stale round %d (at %d)",
            state.client_id, msg.round, state.round,
        )
        return False
    expected = nn.model_spec(state.task.architecture_id)
    if not msg.weights.matches_spec(expected):
        raise ProtocolError("broadcast weights do not match the task architecture")
    state.local_model = msg.weights
    state.round = msg.round
    return msg.selected


def run_training_round(state: ClientState, round_index: int) -> LocalUpdate:
    """Train on the adopted model, perturb, and build the upload message."""
    trained, loss = train_local(
        state.local_model, state.shard, state.task,
        state.client_index, round_index, state.seed_base,
    )
    state.local_model = trained
    state.last_train_loss = loss
    state.rounds_trained += 1
    seed = state.task.hyper.seed if state.seed_base is None else state.seed_base
    perturbed = perturb(
        trained, state.task.privacy, noise_seed(seed, state.client_index, round_index)
    )
    return LocalUpdate(
        round=round_index,
        client_id=state.client_id,
        num_samples=len(state.shard),
        weights=perturbed,
    )


async def _session(url: str, state: ClientState, registered: Optional[asyncio.Event]) -> bool:
    """One connection lifetime; returns True on orderly shutdown."""
    loop = asyncio.get_running_loop()
    async with websockets.connect(url, subprotocols=[WS_SUBPROTOCOL], max_size=None) as ws:
        await ws.send(encode(Register(client_id=state.client_id, num_samples=len(state.shard))))
        ack = decode(await ws.recv())
        if not isinstance(ack, RegisterAck):
            raise ProtocolError(f"expected register_ack, got {type(ack).__name__}")
        state.client_index = ack.client_index
        state.task = ack.task
        if registered is not None:
            registered.set()
        logger.info("client %s registered as index %d", state.client_id, ack.client_index)

        async for frame in ws:
            msg = decode(frame)
            if isinstance(msg, Shutdown):
                logger.info("client %s: shutdown received", state.client_id)
                return True
            if isinstance(msg, RoundMetrics):
                state.metrics_log.append(msg)
                continue
            if isinstance(msg, GlobalModel):
                if adopt_global(state, msg):
                    update = await loop.run_in_executor(
                        None, run_training_round, state, msg.round
                    )
                    await ws.send(encode(update))
                continue
            logger.warning("client %s: unexpected %s", state.client_id, type(msg).__name__)
    return False


async def run_client(
    server_url: str,
    shard: ClientDataset,
    client_id: Optional[str] = None,
    seed: Optional[int] = None,
    max_attempts: int = 5,
    registered: Optional[asyncio.Event] = None,
) -> ClientState:
    """Register, loop adopt -> train -> perturb -> upload until shutdown.

    Reconnects with bounded exponential backoff (re-registering under the
    same client_id); raises after max_attempts failed connections.
    """
    state = ClientState(
        client_id=client_id or str(uuid.uuid4()), shard=shard, seed_base=seed
    )
    backoff = 0.5
    failures = 0
    while True:
        try:
            if await _session(server_url, state, registered):
                return state
            # server closed without shutdown: treat as a connection loss
            raise ConnectionError("connection closed before shutdown")
        except (OSError, ConnectionError, websockets.WebSocketException) as exc:
            failures += 1
            if failures >= max_attempts:
                raise WebFedError(
                    f"client {state.client_id}: giving up after {failures} attempts: {exc}"
                ) from exc
            logger.warning(
                "client %s: connection lost (%s), retrying in %.1fs",
                state.client_id, exc, backoff,
            )
            await asyncio.sleep(backoff)
            backoff = min(backoff * 2, 8.0)
