"""Experiment driver: privacy-budget sweeps at desk scale.

Runs a full federation per (epsilon, seed) grid cell over either
transport:

* ``memory`` -- a single-process sequential simulation calling the
  model, privacy, and aggregation routines directly;
* ``ws`` -- a real loopback WebSocket federation (one server task plus
  one task per client in the same event loop).

Both paths derive every random decision from the same master seed, so
given identical inputs they produce bit-identical final models.
"""

from __future__ import annotations

import asyncio
import csv
import logging
import math
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import nn
from .chart import epsilon_label, render_chart
from .client import run_client, train_local
from .data import ClientDataset, PartitionPlan, load_dataset_dir, partition, synth_dataset
from .errors import ConfigError
from .ldp import PrivacyParams, noise_seed, perturb
from .proto import WS_PATH, HyperParams, TaskConfig
from .seeds import TAG_PARTITION, mix, rng_from
from .server import (
    ClientRecord,
    FederationServer,
    RoundRecord,
    aggregate,
    initial_global_model,
    select_clients,
)

logger = logging.getLogger(__name__)

BUNDLED_MNIST = Path(__file__).resolve().parents[2] / "data" / "mnist10k"

NOISE_FREE = math.inf


@dataclass
class ExperimentConfig:
    clients: int = 5
    rounds: int = 50
    epsilon_list: Sequence[float] = (3.0, 6.0, NOISE_FREE)
    clip: float = 1.0
    eta: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    dataset: str = "synth:2000"  # or "mnist:<dir with IDX files>"
    train_subset: int = 5000
    test_subset: int = 1000
    seeds: Sequence[int] = (1, 2, 3)
    transport: str = "memory"  # or "ws"
    out_dir: Union[str, Path] = "runs"

    def __post_init__(self):
        if self.clients < 1 or self.rounds < 0:
            raise ConfigError("clients must be >= 1 and rounds >= 0")
        for eps in self.epsilon_list:
            if not math.isinf(eps) and eps <= 0:
                raise ConfigError(f"epsilon must be > 0 or inf, got {eps}")
        if self.transport not in ("memory", "ws"):
            raise ConfigError(f"unknown transport {self.transport!r}")


def paper_fig4_config(out_dir="runs/paper-fig4", dataset=None, transport="memory"):
    """Desk-scale reproduction of the privacy-budget accuracy sweep."""
    return ExperimentConfig(
        clients=5,
        rounds=50,
        epsilon_list=(3.0, 6.0, NOISE_FREE),
        clip=1.0,
        eta=0.05,
        local_epochs=1,
        batch_size=32,
        dataset=dataset or f"mnist:{BUNDLED_MNIST}",
        train_subset=5000,
        test_subset=1000,
        seeds=(1, 2, 3),
        transport=transport,
        out_dir=out_dir,
    )


def task_for(cfg: ExperimentConfig, epsilon: float, seed: int) -> TaskConfig:
    return TaskConfig(
        architecture_id=nn.LENET_V1,
        hyper=HyperParams(
            eta=cfg.eta, local_epochs=cfg.local_epochs,
            batch_size=cfg.batch_size, seed=seed,
        ),
        privacy=PrivacyParams(
            epsilon=None if math.isinf(epsilon) else epsilon, clip=cfg.clip
        ),
        rounds_total=cfg.rounds,
        clients_per_round=cfg.clients,
    )


def load_pool(cfg: ExperimentConfig) -> ClientDataset:
    kind, _, arg = cfg.dataset.partition(":")
    if kind == "synth":
        return synth_dataset(int(arg), seed=0)
    if kind == "mnist":
        return load_dataset_dir(arg)
    raise ConfigError(f"unknown dataset spec {cfg.dataset!r}")


def split_train_test(
    pool: ClientDataset, train_n: int, test_n: int, seed: int
) -> tuple[ClientDataset, ClientDataset]:
    n = len(pool)
    train_n = min(train_n, n - 1)
    test_n = min(test_n, n - train_n)
    order = rng_from(mix(seed, TAG_PARTITION, 0xD5)).permutation(n)
    return pool.subset(order[:train_n]), pool.subset(order[train_n : train_n + test_n])


# ---------------------------------------------------------------------------
# transports


def run_sequential_federation(
    task: TaskConfig, shards: Sequence[ClientDataset], test_set: ClientDataset
) -> tuple[nn.WeightsBundle, list[RoundRecord]]:
    """Direct in-memory federation; the oracle the networked path must match."""
    registry = [
        ClientRecord(client_id=str(i), client_index=i, num_samples=len(shard))
        for i, shard in enumerate(shards)
    ]
    global_model = initial_global_model(task)
    records = []
    for round_index in range(1, task.rounds_total + 1):
        started = time.monotonic()
        selected = select_clients(
            registry, task.clients_per_round, task.hyper.seed, round_index
        )
        updates = []
        for index in sorted(selected):
            trained, _ = train_local(global_model, shards[index], task, index, round_index)
            perturbed = perturb(
                trained, task.privacy, noise_seed(task.hyper.seed, index, round_index)
            )
            updates.append((len(shards[index]), perturbed))
        global_model = aggregate(updates)
        accuracy, loss = nn.evaluate(global_model, test_set)
        records.append(
            RoundRecord(
                round=round_index, accuracy=accuracy, loss=loss,
                wall_time_seconds=time.monotonic() - started,
                num_updates_received=len(updates),
            )
        )
    return global_model, records


async def run_ws_federation(
    task: TaskConfig,
    shards: Sequence[ClientDataset],
    test_set: ClientDataset,
    round_timeout: float = 120.0,
) -> tuple[nn.WeightsBundle, list[RoundRecord]]:
    """Loopback-WebSocket federation with one task per client.

    Clients are registered strictly in shard order so client_index i
    always trains shard i, matching the sequential simulation.
    """
    server = FederationServer(
        task, test_set, min_clients=len(shards), round_timeout=round_timeout
    )
    server_job = asyncio.create_task(server.run())
    while server._server is None:
        await asyncio.sleep(0.01)
        if server_job.done():
            server_job.result()  # propagate startup errors
    url = f"ws://{server.host}:{server.port}{WS_PATH}"
    client_jobs = []
    for shard in shards:
        registered = asyncio.Event()
        job = asyncio.create_task(
            run_client(url, shard, client_id=str(uuid.uuid4()), registered=registered)
        )
        client_jobs.append(job)
        waiter = asyncio.create_task(registered.wait())
        done, _ = await asyncio.wait({waiter, job}, return_when=asyncio.FIRST_COMPLETED)
        if job in done:
            waiter.cancel()
            job.result()  # surfaces the client's startup failure
    final, records = await server_job
    await asyncio.gather(*client_jobs)
    return final, records


# ---------------------------------------------------------------------------
# sweep driver


@dataclass
class RunResult:
    epsilon: float
    seed: int
    records: list[RoundRecord]
    final_model: nn.WeightsBundle
    csv_path: Optional[Path] = None


def _write_run_csv(path: Path, result: RunResult) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "accuracy", "loss", "wall_time_seconds",
             "num_updates_received", "epsilon", "seed"]
        )
        for r in result.records:
            writer.writerow(
                [r.round, f"{r.accuracy:.6f}", f"{r.loss:.6f}",
                 f"{r.wall_time_seconds:.3f}", r.num_updates_received,
                 result.epsilon, result.seed]
            )


def run_single(
    cfg: ExperimentConfig, epsilon: float, seed: int, pool: Optional[ClientDataset] = None
) -> RunResult:
    pool = pool if pool is not None else load_pool(cfg)
    train, test = split_train_test(pool, cfg.train_subset, cfg.test_subset, seed)
    shards = partition(train, PartitionPlan(num_clients=cfg.clients, seed=seed))
    task = task_for(cfg, epsilon, seed)
    if cfg.transport == "memory":
        final, records = run_sequential_federation(task, shards, test)
    else:
        final, records = asyncio.run(run_ws_federation(task, shards, test))
    return RunResult(epsilon=epsilon, seed=seed, records=records, final_model=final)


def run_experiment(cfg: ExperimentConfig) -> list[RunResult]:
    """Full sweep; one CSV per run, a combined summary, and the chart."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pool = load_pool(cfg)
    results = []
    try:
        for epsilon in cfg.epsilon_list:
            for seed in cfg.seeds:
                started = time.monotonic()
                result = run_single(cfg, epsilon, seed, pool)
                label = "inf" if math.isinf(epsilon) else f"{epsilon:g}"
                result.csv_path = out / f"eps{label}_seed{seed}.csv"
                _write_run_csv(result.csv_path, result)
                last = result.records[-1].accuracy if result.records else float("nan")
                logger.info(
                    "run eps=%s seed=%d: final accuracy %.4f (%.1fs)",
                    epsilon_label(epsilon), seed, last, time.monotonic() - started,
                )
                results.append(result)
    finally:
        if results:
            _write_summary(out, results)
    return results


def _write_summary(out: Path, results: list[RunResult]) -> None:
    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "accuracy", "loss", "wall_time_seconds",
             "num_updates_received", "epsilon", "seed"]
        )
        for result in results:
            for r in result.records:
                writer.writerow(
                    [r.round, f"{r.accuracy:.6f}", f"{r.loss:.6f}",
                     f"{r.wall_time_seconds:.3f}", r.num_updates_received,
                     result.epsilon, result.seed]
                )
    csv_paths = [r.csv_path for r in results if r.csv_path is not None]
    if csv_paths:
        render_chart(csv_paths, out / "accuracy_vs_round.svg")


def mean_accuracy_by_round(results: list[RunResult], epsilon: float) -> dict[int, float]:
    """Seed-averaged accuracy curve for one epsilon series."""
    sums: dict[int, list[float]] = {}
    for result in results:
        if result.epsilon == epsilon:
            for r in result.records:
                sums.setdefault(r.round, []).append(r.accuracy)
    return {t: sum(v) / len(v) for t, v in sums.items()}
