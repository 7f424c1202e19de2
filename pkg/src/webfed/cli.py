"""Command-line entry points: server, client, sim, data tooling."""

from __future__ import annotations

import argparse
import asyncio
import logging
import math
import sys
import uuid
from pathlib import Path

from . import nn
from .data import (
    ClientDataset,
    PartitionPlan,
    fetch_mnist,
    load_dataset_dir,
    load_idx_dataset,
    partition,
    synth_dataset,
    write_partition_manifest,
)
from .errors import WebFedError
from .ldp import PrivacyParams
from .proto import HyperParams, TaskConfig
from .sim import (
    ExperimentConfig,
    NOISE_FREE,
    load_pool,
    paper_fig4_config,
    run_experiment,
    split_train_test,
)

logger = logging.getLogger(__name__)


def _dataset_from_arg(spec: str) -> ClientDataset:
    """Accepts 'synth:N', a directory of bundled-style IDX files, or
    'IMAGES_PATH,LABELS_PATH'."""
    if spec.startswith("synth:"):
        return synth_dataset(int(spec.split(":", 1)[1]), seed=0)
    if "," in spec:
        images, labels = spec.split(",", 1)
        return load_idx_dataset(images, labels)
    return load_dataset_dir(spec)


def _epsilon_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--epsilon", type=float, help="privacy budget (> 0)")
    group.add_argument(
        "--noise-free", action="store_true", help="disable the LDP mechanism"
    )


def _cmd_server(args: argparse.Namespace) -> int:
    from .server import FederationServer

    task = TaskConfig(
        architecture_id=nn.LENET_V1,
        hyper=HyperParams(
            eta=args.eta, local_epochs=args.local_epochs,
            batch_size=args.batch_size, seed=args.seed,
        ),
        privacy=PrivacyParams(
            epsilon=None if args.noise_free or args.epsilon is None else args.epsilon,
            clip=args.clip,
        ),
        rounds_total=args.rounds,
        clients_per_round=args.clients_per_round,
    )
    test_set = _dataset_from_arg(args.test_data)
    server = FederationServer(
        task,
        test_set,
        min_clients=args.min_clients,
        round_timeout=args.round_timeout,
        host=args.host,
        port=args.port,
        metrics_path=Path(args.metrics_out) if args.metrics_out else None,
        serve_ui=Path(args.serve_ui) if args.serve_ui else None,
    )
    _, records = asyncio.run(server.run())
    logger.info("completed %d rounds", len(records))
    return 0


def _cmd_client(args: argparse.Namespace) -> int:
    from .client import run_client

    shard = _dataset_from_arg(args.data)
    asyncio.run(
        run_client(
            args.server, shard,
            client_id=args.client_id or str(uuid.uuid4()),
            seed=args.seed,
        )
    )
    return 0


def _parse_epsilon_list(raw: str) -> tuple[float, ...]:
    out = []
    for piece in raw.split(","):
        piece = piece.strip().lower()
        out.append(NOISE_FREE if piece in ("inf", "noise-free") else float(piece))
    return tuple(out)


def _cmd_sim(args: argparse.Namespace) -> int:
    if args.preset == "paper-fig4":
        cfg = paper_fig4_config(
            out_dir=args.out, dataset=args.dataset, transport=args.transport
        )
    else:
        cfg = ExperimentConfig(
            clients=args.clients,
            rounds=args.rounds,
            epsilon_list=_parse_epsilon_list(args.epsilon),
            clip=args.clip,
            eta=args.eta,
            local_epochs=args.local_epochs,
            batch_size=args.batch_size,
            dataset=args.dataset or "synth:2000",
            train_subset=args.train_subset,
            test_subset=args.test_subset,
            seeds=tuple(int(s) for s in args.seeds.split(",")),
            transport=args.transport,
            out_dir=args.out,
        )
    results = run_experiment(cfg)
    for result in results:
        last = result.records[-1].accuracy if result.records else math.nan
        eps = "noise-free" if math.isinf(result.epsilon) else f"eps={result.epsilon:g}"
        print(f"{eps} seed={result.seed}: final accuracy {last:.4f}")
    print(f"wrote CSVs and chart under {cfg.out_dir}")
    return 0


def _cmd_data_fetch(args: argparse.Namespace) -> int:
    paths = fetch_mnist(args.out)
    for p in paths:
        print(p)
    return 0


def _cmd_data_partition(args: argparse.Namespace) -> int:
    ds = load_idx_dataset(args.images, args.labels)
    plan = PartitionPlan(num_clients=args.clients, seed=args.seed, strategy=args.strategy)
    shards = partition(ds, plan)
    manifest = write_partition_manifest(args.out, plan, shards)
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="webfed",
        description="Federated averaging over WebSockets with local differential privacy",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("server", help="run the parameter server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--clients-per-round", type=int, default=5)
    p.add_argument("--min-clients", type=int, default=None)
    _epsilon_args(p)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--local-epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-data", required=True,
                   help="synth:N, an IDX directory, or IMAGES,LABELS paths")
    p.add_argument("--metrics-out", default=None)
    p.add_argument("--round-timeout", type=float, default=120.0)
    p.add_argument("--serve-ui", default=None, help="static directory for the web client")
    p.set_defaults(func=_cmd_server)

    p = sub.add_parser("client", help="run a headless training client")
    p.add_argument("--server", required=True, help="ws://host:port/ws")
    p.add_argument("--data", required=True,
                   help="synth:N, an IDX directory, or IMAGES,LABELS paths")
    p.add_argument("--client-id", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_client)

    p = sub.add_parser("sim", help="run a privacy-budget sweep experiment")
    p.add_argument("--preset", choices=["paper-fig4"], default=None)
    p.add_argument("--clients", type=int, default=5)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--epsilon", default="3,6,inf",
                   help="comma list; inf means noise-free")
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--local-epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dataset", default=None, help="mnist:DIR or synth:N")
    p.add_argument("--train-subset", type=int, default=5000)
    p.add_argument("--test-subset", type=int, default=1000)
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--transport", choices=["memory", "ws"], default="memory")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("data", help="dataset tooling")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    q = data_sub.add_parser("fetch", help="download the canonical MNIST IDX files")
    q.add_argument("--out", default="data/mnist")
    q.set_defaults(func=_cmd_data_fetch)
    q = data_sub.add_parser("partition", help="split an IDX dataset into shards")
    q.add_argument("--images", required=True)
    q.add_argument("--labels", required=True)
    q.add_argument("--clients", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--strategy", choices=["iid", "label-sorted"], default="iid")
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_data_partition)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (WebFedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
