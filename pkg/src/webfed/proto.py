"""Wire contract: JSON message schemas, weight codec, task configuration.

One message per WebSocket text frame.  Frames are JSON objects with a
"type" tag; model weights travel as base64-encoded little-endian
float32 payloads in fixed tensor order, so decode(encode(w)) is
bit-identical to w.  The subprotocol / version string is "webfed/1".
"""

from __future__ import annotations

import base64
import binascii
import json
import math
import uuid
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CodecError, ConfigError, ParseError, ProtocolError, SchemaError
from .ldp import PrivacyParams
from .nn import WeightsBundle, model_spec

PROTOCOL_VERSION = "webfed/1"
# RFC 6455 subprotocols are RFC 2616 tokens, which forbid "/"; the wire
# token is therefore a dotted spelling of the same version.
WS_SUBPROTOCOL = "webfed.v1"
WS_PATH = "/ws"


@dataclass(frozen=True)
class HyperParams:
    """Local-training knobs shipped to every client in the task config."""

    eta: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.eta}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class TaskConfig:
    """Everything a client needs to participate in the single server task."""

    architecture_id: str
    hyper: HyperParams
    privacy: PrivacyParams
    rounds_total: int
    clients_per_round: int

    def __post_init__(self):
        model_spec(self.architecture_id)  # raises on unknown id
        if self.rounds_total < 0:
            raise ConfigError(f"rounds_total must be >= 0, got {self.rounds_total}")
        if self.clients_per_round < 1:
            raise ConfigError(
                f"clients_per_round must be >= 1, got {self.clients_per_round}"
            )


@dataclass(frozen=True)
class Register:
    client_id: str
    num_samples: int
    protocol: str = PROTOCOL_VERSION


@dataclass(frozen=True)
class RegisterAck:
    client_index: int
    task: TaskConfig


@dataclass(frozen=True)
class GlobalModel:
    round: int
    selected: bool
    weights: WeightsBundle


@dataclass(frozen=True)
class LocalUpdate:
    round: int
    client_id: str
    num_samples: int
    weights: WeightsBundle


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    accuracy: float
    loss: float


@dataclass(frozen=True)
class Shutdown:
    pass


FedMessage = Union[Register, RegisterAck, GlobalModel, LocalUpdate, RoundMetrics, Shutdown]

_TYPE_NAMES = {
    Register: "register",
    RegisterAck: "register_ack",
    GlobalModel: "global_model",
    LocalUpdate: "local_update",
    RoundMetrics: "round_metrics",
    Shutdown: "shutdown",
}


# ---------------------------------------------------------------------------
# weight codec


def encode_weights(w: WeightsBundle) -> list[dict]:
    """Bundle -> JSON-safe tensor list; refuses NaN/Inf coordinates."""
    out = []
    for name, arr in w:
        if not np.isfinite(arr).all():
            raise CodecError(f"tensor {name!r} contains non-finite values")
        data = base64.b64encode(arr.astype("<f4", copy=False).tobytes()).decode("ascii")
        out.append({"name": name, "shape": list(arr.shape), "data": data})
    return out


def decode_weights(items: object) -> WeightsBundle:
    """JSON tensor list -> bundle, validating shape/payload consistency."""
    if not isinstance(items, list) or not items:
        raise SchemaError("weights must be a non-empty tensor list")
    tensors = []
    for i, entry in enumerate(items):
        if not isinstance(entry, dict):
            raise SchemaError(f"tensor #{i} is not an object")
        for field in ("name", "shape", "data"):
            if field not in entry:
                raise SchemaError(f"tensor #{i} is missing {field!r}")
        name, shape, data = entry["name"], entry["shape"], entry["data"]
        if not isinstance(name, str):
            raise SchemaError(f"tensor #{i} name is not a string")
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in shape)
        ):
            raise SchemaError(f"tensor {name!r} shape must be positive integers")
        if not isinstance(data, str):
            raise SchemaError(f"tensor {name!r} data is not a string")
        try:
            raw = base64.b64decode(data.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as exc:
            raise CodecError(f"tensor {name!r} payload is not valid base64: {exc}") from None
        expected = 4 * int(np.prod(shape))
        if len(raw) != expected:
            raise CodecError(
                f"tensor {name!r} payload holds {len(raw)} bytes, shape needs {expected}"
            )
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
        if not np.isfinite(arr).all():
            raise CodecError(f"tensor {name!r} contains non-finite values")
        tensors.append((name, arr))
    return WeightsBundle(tensors)


# ---------------------------------------------------------------------------
# field validation helpers


def _require(obj: dict, field: str, msg_type: str) -> object:
    if field not in obj:
        raise SchemaError(f"{msg_type} message is missing field {field!r}")
    return obj[field]


def _uint(value: object, field: str, msg_type: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise SchemaError(f"{msg_type}.{field} must be a non-negative integer")
    return value


def _finite_number(value: object, field: str, msg_type: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{msg_type}.{field} must be a number")
    if not math.isfinite(value):
        raise SchemaError(f"{msg_type}.{field} must be finite")
    return float(value)


def _uuid_string(value: object, field: str, msg_type: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{msg_type}.{field} must be a string")
    try:
        uuid.UUID(value)
    except ValueError:
        raise SchemaError(f"{msg_type}.{field} is not a valid UUID") from None
    return value


def _task_to_json(task: TaskConfig) -> dict:
    return {
        "architecture_id": task.architecture_id,
        "hyper": {
            "eta": task.hyper.eta,
            "local_epochs": task.hyper.local_epochs,
            "batch_size": task.hyper.batch_size,
            "seed": task.hyper.seed,
        },
        "privacy": {"epsilon": task.privacy.epsilon, "clip": task.privacy.clip},
        "rounds_total": task.rounds_total,
        "clients_per_round": task.clients_per_round,
    }


def _task_from_json(obj: object) -> TaskConfig:
    if not isinstance(obj, dict):
        raise SchemaError("register_ack.task must be an object")
    for field in ("architecture_id", "hyper", "privacy", "rounds_total", "clients_per_round"):
        _require(obj, field, "task")
    hyper, privacy = obj["hyper"], obj["privacy"]
    if not isinstance(hyper, dict) or not isinstance(privacy, dict):
        raise SchemaError("task.hyper and task.privacy must be objects")
    for field in ("eta", "local_epochs", "batch_size", "seed"):
        _require(hyper, field, "task.hyper")
    for field in ("epsilon", "clip"):
        _require(privacy, field, "task.privacy")
    eps = privacy["epsilon"]
    if eps is not None:
        eps = _finite_number(eps, "epsilon", "task.privacy")
    try:
        return TaskConfig(
            architecture_id=str(obj["architecture_id"]),
            hyper=HyperParams(
                eta=_finite_number(hyper["eta"], "eta", "task.hyper"),
                local_epochs=_uint(hyper["local_epochs"], "local_epochs", "task.hyper"),
                batch_size=_uint(hyper["batch_size"], "batch_size", "task.hyper"),
                seed=_uint(hyper["seed"], "seed", "task.hyper"),
            ),
            privacy=PrivacyParams(
                epsilon=eps,
                clip=_finite_number(privacy["clip"], "clip", "task.privacy"),
            ),
            rounds_total=_uint(obj["rounds_total"], "rounds_total", "task"),
            clients_per_round=_uint(obj["clients_per_round"], "clients_per_round", "task"),
        )
    except ConfigError as exc:
        raise SchemaError(f"task config is invalid: {exc}") from None


# ---------------------------------------------------------------------------
# message codec


def encode(msg: FedMessage) -> str:
    """Message -> single JSON text frame."""
    if isinstance(msg, Register):
        body = {
            "type": "register",
            "client_id": msg.client_id,
            "num_samples": msg.num_samples,
            "protocol": msg.protocol,
        }
    elif isinstance(msg, RegisterAck):
        body = {
            "type": "register_ack",
            "client_index": msg.client_index,
            "task": _task_to_json(msg.task),
        }
    elif isinstance(msg, GlobalModel):
        body = {
            "type": "global_model",
            "round": msg.round,
            "selected": msg.selected,
            "weights": encode_weights(msg.weights),
        }
    elif isinstance(msg, LocalUpdate):
        body = {
            "type": "local_update",
            "round": msg.round,
            "client_id": msg.client_id,
            "num_samples": msg.num_samples,
            "weights": encode_weights(msg.weights),
        }
    elif isinstance(msg, RoundMetrics):
        body = {
            "type": "round_metrics",
            "round": msg.round,
            "accuracy": msg.accuracy,
            "loss": msg.loss,
        }
    elif isinstance(msg, Shutdown):
        body = {"type": "shutdown"}
    else:
        raise ProtocolError(f"cannot encode object of type {type(msg).__name__}")
    return json.dumps(body, separators=(",", ":"), allow_nan=False)


def decode(frame: Union[str, bytes]) -> FedMessage:
    """JSON text frame -> validated message; raises a typed error."""
    if isinstance(frame, bytes):
        try:
            frame = frame.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"frame is not UTF-8: {exc}") from None
    try:
        obj = json.loads(frame)
    except json.JSONDecodeError as exc:
        raise ParseError(f"frame is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("frame must be a JSON object")
    msg_type = obj.get("type")
    if msg_type is None:
        raise SchemaError("frame is missing the 'type' field")

    if msg_type == "register":
        protocol = _require(obj, "protocol", msg_type)
        if protocol != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: got {protocol!r}, need {PROTOCOL_VERSION!r}"
            )
        return Register(
            client_id=_uuid_string(_require(obj, "client_id", msg_type), "client_id", msg_type),
            num_samples=_uint(_require(obj, "num_samples", msg_type), "num_samples", msg_type),
            protocol=PROTOCOL_VERSION,
        )
    if msg_type == "register_ack":
        return RegisterAck(
            client_index=_uint(_require(obj, "client_index", msg_type), "client_index", msg_type),
            task=_task_from_json(_require(obj, "task", msg_type)),
        )
    if msg_type == "global_model":
        selected = _require(obj, "selected", msg_type)
        if not isinstance(selected, bool):
            raise SchemaError("global_model.selected must be a boolean")
        return GlobalModel(
            round=_uint(_require(obj, "round", msg_type), "round", msg_type),
            selected=selected,
            weights=decode_weights(_require(obj, "weights", msg_type)),
        )
    if msg_type == "local_update":
        return LocalUpdate(
            round=_uint(_require(obj, "round", msg_type), "round", msg_type),
            client_id=_uuid_string(_require(obj, "client_id", msg_type), "client_id", msg_type),
            num_samples=_uint(_require(obj, "num_samples", msg_type), "num_samples", msg_type),
            weights=decode_weights(_require(obj, "weights", msg_type)),
        )
    if msg_type == "round_metrics":
        return RoundMetrics(
            round=_uint(_require(obj, "round", msg_type), "round", msg_type),
            accuracy=_finite_number(_require(obj, "accuracy", msg_type), "accuracy", msg_type),
            loss=_finite_number(_require(obj, "loss", msg_type), "loss", msg_type),
        )
    if msg_type == "shutdown":
        return Shutdown()
    raise ProtocolError(f"unknown message type {msg_type!r}")
