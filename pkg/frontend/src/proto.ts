// Wire contract ("webfed/1"): JSON text frames, one message per frame,
// weights as base64 little-endian float32 in fixed tensor order.

export const PROTOCOL_VERSION = "webfed/1";
// RFC 6455 subprotocol tokens cannot contain "/", hence the dotted form.
export const WS_SUBPROTOCOL = "webfed.v1";
export const WS_PATH = "/ws";

export interface Tensor {
  name: string;
  shape: number[];
  data: Float32Array;
}

export type WeightsBundle = Tensor[];

export interface HyperParams {
  eta: number;
  local_epochs: number;
  batch_size: number;
  seed: number;
}

export interface PrivacyParams {
  epsilon: number | null;
  clip: number;
}

export interface TaskConfig {
  architecture_id: string;
  hyper: HyperParams;
  privacy: PrivacyParams;
  rounds_total: number;
  clients_per_round: number;
}

export type FedMessage =
  | { type: "register"; client_id: string; num_samples: number; protocol: string }
  | { type: "register_ack"; client_index: number; task: TaskConfig }
  | { type: "global_model"; round: number; selected: boolean; weights: WeightsBundle }
  | { type: "local_update"; round: number; client_id: string; num_samples: number; weights: WeightsBundle }
  | { type: "round_metrics"; round: number; accuracy: number; loss: number }
  | { type: "shutdown" };

export class ProtocolError extends Error {}
export class SchemaError extends Error {}
export class CodecError extends Error {}

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

function base64ToBytes(text: string): Uint8Array {
  let binary: string;
  try {
    binary = atob(text);
  } catch {
    throw new CodecError("payload is not valid base64");
  }
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

export function encodeWeights(weights: WeightsBundle): object[] {
  return weights.map((t) => {
    for (const v of t.data) {
      if (!Number.isFinite(v)) throw new CodecError(`tensor ${t.name} has non-finite values`);
    }
    // serialize little-endian regardless of platform
    const out = new Uint8Array(t.data.length * 4);
    const view = new DataView(out.buffer);
    for (let i = 0; i < t.data.length; i++) view.setFloat32(i * 4, t.data[i], true);
    return { name: t.name, shape: t.shape, data: bytesToBase64(out) };
  });
}

export function decodeWeights(items: unknown): WeightsBundle {
  if (!Array.isArray(items) || items.length === 0) {
    throw new SchemaError("weights must be a non-empty tensor list");
  }
  return items.map((entry, i) => {
    if (typeof entry !== "object" || entry === null) {
      throw new SchemaError(`tensor #${i} is not an object`);
    }
    const { name, shape, data } = entry as Record<string, unknown>;
    if (typeof name !== "string") throw new SchemaError(`tensor #${i} name is not a string`);
    if (
      !Array.isArray(shape) ||
      shape.length === 0 ||
      !shape.every((d) => Number.isInteger(d) && (d as number) > 0)
    ) {
      throw new SchemaError(`tensor ${name} shape must be positive integers`);
    }
    if (typeof data !== "string") throw new SchemaError(`tensor ${name} data is not a string`);
    const bytes = base64ToBytes(data);
    const count = (shape as number[]).reduce((a, b) => a * b, 1);
    if (bytes.length !== count * 4) {
      throw new CodecError(`tensor ${name} payload holds ${bytes.length} bytes, shape needs ${count * 4}`);
    }
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    const out = new Float32Array(count);
    for (let j = 0; j < count; j++) {
      out[j] = view.getFloat32(j * 4, true);
      if (!Number.isFinite(out[j])) throw new CodecError(`tensor ${name} has non-finite values`);
    }
    return { name, shape: [...(shape as number[])], data: out };
  });
}

function requireField(obj: Record<string, unknown>, field: string, kind: string): unknown {
  if (!(field in obj)) throw new SchemaError(`${kind} message is missing field '${field}'`);
  return obj[field];
}

function uint(value: unknown, field: string, kind: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new SchemaError(`${kind}.${field} must be a non-negative integer`);
  }
  return value;
}

function finiteNumber(value: unknown, field: string, kind: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new SchemaError(`${kind}.${field} must be a finite number`);
  }
  return value;
}

const UUID_RE = /^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$/i;

function uuidString(value: unknown, field: string, kind: string): string {
  if (typeof value !== "string" || !UUID_RE.test(value)) {
    throw new SchemaError(`${kind}.${field} is not a valid UUID`);
  }
  return value;
}

function taskFromJson(obj: unknown): TaskConfig {
  if (typeof obj !== "object" || obj === null) throw new SchemaError("task must be an object");
  const o = obj as Record<string, unknown>;
  for (const f of ["architecture_id", "hyper", "privacy", "rounds_total", "clients_per_round"]) {
    requireField(o, f, "task");
  }
  const hyper = o.hyper as Record<string, unknown>;
  const privacy = o.privacy as Record<string, unknown>;
  const epsilon = privacy.epsilon === null ? null : finiteNumber(privacy.epsilon, "epsilon", "task.privacy");
  return {
    architecture_id: String(o.architecture_id),
    hyper: {
      eta: finiteNumber(requireField(hyper, "eta", "task.hyper"), "eta", "task.hyper"),
      local_epochs: uint(requireField(hyper, "local_epochs", "task.hyper"), "local_epochs", "task.hyper"),
      batch_size: uint(requireField(hyper, "batch_size", "task.hyper"), "batch_size", "task.hyper"),
      seed: uint(requireField(hyper, "seed", "task.hyper"), "seed", "task.hyper"),
    },
    privacy: { epsilon, clip: finiteNumber(requireField(privacy, "clip", "task.privacy"), "clip", "task.privacy") },
    rounds_total: uint(o.rounds_total, "rounds_total", "task"),
    clients_per_round: uint(o.clients_per_round, "clients_per_round", "task"),
  };
}

export function encode(msg: FedMessage): string {
  switch (msg.type) {
    case "register":
      return JSON.stringify({
        type: "register",
        client_id: msg.client_id,
        num_samples: msg.num_samples,
        protocol: msg.protocol,
      });
    case "local_update":
      return JSON.stringify({
        type: "local_update",
        round: msg.round,
        client_id: msg.client_id,
        num_samples: msg.num_samples,
        weights: encodeWeights(msg.weights),
      });
    case "global_model":
      return JSON.stringify({
        type: "global_model",
        round: msg.round,
        selected: msg.selected,
        weights: encodeWeights(msg.weights),
      });
    case "register_ack":
      return JSON.stringify({ type: "register_ack", client_index: msg.client_index, task: msg.task });
    case "round_metrics":
      return JSON.stringify({ type: "round_metrics", round: msg.round, accuracy: msg.accuracy, loss: msg.loss });
    case "shutdown":
      return JSON.stringify({ type: "shutdown" });
  }
}

export function decode(frame: string): FedMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(frame);
  } catch (exc) {
    throw new ProtocolError(`frame is not valid JSON: ${exc}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new SchemaError("frame must be a JSON object");
  }
  const o = obj as Record<string, unknown>;
  const type = o.type;
  switch (type) {
    case "register":
      if (requireField(o, "protocol", "register") !== PROTOCOL_VERSION) {
        throw new ProtocolError(`protocol version mismatch: need ${PROTOCOL_VERSION}`);
      }
      return {
        type: "register",
        client_id: uuidString(requireField(o, "client_id", "register"), "client_id", "register"),
        num_samples: uint(requireField(o, "num_samples", "register"), "num_samples", "register"),
        protocol: PROTOCOL_VERSION,
      };
    case "register_ack":
      return {
        type: "register_ack",
        client_index: uint(requireField(o, "client_index", "register_ack"), "client_index", "register_ack"),
        task: taskFromJson(requireField(o, "task", "register_ack")),
      };
    case "global_model": {
      const selected = requireField(o, "selected", "global_model");
      if (typeof selected !== "boolean") throw new SchemaError("global_model.selected must be a boolean");
      return {
        type: "global_model",
        round: uint(requireField(o, "round", "global_model"), "round", "global_model"),
        selected,
        weights: decodeWeights(requireField(o, "weights", "global_model")),
      };
    }
    case "local_update":
      return {
        type: "local_update",
        round: uint(requireField(o, "round", "local_update"), "round", "local_update"),
        client_id: uuidString(requireField(o, "client_id", "local_update"), "client_id", "local_update"),
        num_samples: uint(requireField(o, "num_samples", "local_update"), "num_samples", "local_update"),
        weights: decodeWeights(requireField(o, "weights", "local_update")),
      };
    case "round_metrics":
      return {
        type: "round_metrics",
        round: uint(requireField(o, "round", "round_metrics"), "round", "round_metrics"),
        accuracy: finiteNumber(requireField(o, "accuracy", "round_metrics"), "accuracy", "round_metrics"),
        loss: finiteNumber(requireField(o, "loss", "round_metrics"), "loss", "round_metrics"),
      };
    case "shutdown":
      return { type: "shutdown" };
    case undefined:
      throw new SchemaError("frame is missing the 'type' field");
    default:
      throw new ProtocolError(`unknown message type '${String(type)}'`);
  }
}
