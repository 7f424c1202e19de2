"""Generate cross-implementation fixtures for the browser client tests.

Writes frontend/fixtures/{train_step_fixture.json, golden_frames.json}.
The train-step fixture freezes one full-batch SGD step computed by the
reference implementation; the browser's training must match every
coordinate within 1e-4.
"""

import base64
import json
import sys
import uuid
from pathlib import Path

import numpy as np

from webfed import data, nn, proto
from webfed.ldp import PrivacyParams

OUT = Path(__file__).resolve().parents[1] / "frontend" / "fixtures"


def b64_f32(arr):
    return base64.b64encode(np.asarray(arr, "<f4").tobytes()).decode()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    spec = nn.model_spec()

    # -- single-step training fixture ------------------------------------
    weights = nn.init_weights(spec, 42)
    shard = data.synth_dataset(16, seed=7)
    batch_x = shard.images
    batch_y = shard.labels
    eta = 0.1
    loss, grads = nn.loss_and_grad(weights, batch_x, nn.one_hot(batch_y))
    stepped = nn.sgd_step(weights, grads, eta)
    fixture = {
        "eta": eta,
        "loss": loss,
        "batch": {
            "n": len(shard),
            "images": b64_f32(batch_x),
            "labels": [int(v) for v in batch_y],
        },
        "weights": proto.encode_weights(weights),
        "expected": proto.encode_weights(stepped),
        "tolerance": 1e-4,
    }
    (OUT / "train_step_fixture.json").write_text(json.dumps(fixture))
    print("wrote train_step_fixture.json, loss =", loss)

    # -- golden wire frames ----------------------------------------------
    cid = str(uuid.UUID(int=0xABCDEF0123456789ABCDEF0123456789))
    task = proto.TaskConfig(
        architecture_id=nn.LENET_V1,
        hyper=proto.HyperParams(eta=0.05, local_epochs=1, batch_size=32, seed=99),
        privacy=PrivacyParams(epsilon=3.0, clip=1.0),
        rounds_total=5,
        clients_per_round=2,
    )
    task_nf = proto.TaskConfig(
        architecture_id=nn.LENET_V1,
        hyper=proto.HyperParams(eta=0.05, local_epochs=2, batch_size=16, seed=4),
        privacy=PrivacyParams(epsilon=None, clip=0.5),
        rounds_total=3,
        clients_per_round=1,
    )
    small = nn.WeightsBundle(
        [
            ("conv1.b", np.array([0.5, -0.0, 1.25e-3, 8, -2, 0.1, 7e-5, 3], np.float32)),
            ("dense1.b", np.linspace(-1, 1, 10).astype(np.float32)),
        ]
    )
    frames = {
        "register": proto.encode(proto.Register(client_id=cid, num_samples=321)),
        "register_ack_eps3": proto.encode(proto.RegisterAck(client_index=4, task=task)),
        "register_ack_noise_free": proto.encode(proto.RegisterAck(client_index=0, task=task_nf)),
        "global_model": proto.encode(proto.GlobalModel(round=7, selected=True, weights=small)),
        "local_update": proto.encode(
            proto.LocalUpdate(round=7, client_id=cid, num_samples=321, weights=small)
        ),
        "round_metrics": proto.encode(proto.RoundMetrics(round=7, accuracy=0.8125, loss=0.75)),
        "shutdown": proto.encode(proto.Shutdown()),
    }
    expectations = {
        "register": {"client_id": cid, "num_samples": 321},
        "register_ack_eps3": {"client_index": 4, "epsilon": 3.0, "rounds_total": 5},
        "register_ack_noise_free": {"client_index": 0, "epsilon": None, "rounds_total": 3},
        "global_model": {"round": 7, "selected": True, "tensor0": "conv1.b"},
        "round_metrics": {"round": 7, "accuracy": 0.8125, "loss": 0.75},
    }
    (OUT / "golden_frames.json").write_text(
        json.dumps({"frames": frames, "expect": expectations})
    )
    print("wrote golden_frames.json")


if __name__ == "__main__":
    sys.exit(main())
