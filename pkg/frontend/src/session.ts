// Live federation session: one WebSocket plus the three workers.
//
// Per-round phase order is strict: idle -> training -> perturbing ->
// uploading -> idle.  A local_update is only ever sent after the LDP
// worker returned `perturbed` for that round, and each round uploads at
// most once.  Mid-session disconnects reconnect with the same client_id
// (up to five attempts) and resume at the next broadcast.

import {
  FedMessage,
  PROTOCOL_VERSION,
  TaskConfig,
  WeightsBundle,
  decode,
  encode,
} from "./proto.js";
import { matchesArchitecture } from "./model.js";
import { WorkerMessage, WorkerPort, DataSource } from "./messages.js";

export type SessionPhase =
  | "disconnected"
  | "connecting"
  | "registering"
  | "idle"
  | "training"
  | "perturbing"
  | "uploading"
  | "complete"
  | "error";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onOpen(cb: () => void): void;
  onFrame(cb: (data: string) => void): void;
  onClose(cb: () => void): void;
  onError(cb: (message: string) => void): void;
}

export type SocketFactory = (url: string, subprotocol: string) => SocketLike;

export interface SessionEvents {
  phase?(phase: SessionPhase): void;
  task?(task: TaskConfig, clientIndex: number): void;
  round?(round: number, totalTrained: number): void;
  localLoss?(loss: number): void;
  metrics?(round: number, accuracy: number, loss: number): void;
  log?(line: string): void;
  error?(message: string): void;
}

export interface SessionOptions {
  url: string;
  clientId: string;
  dataSource: DataSource;
  socketFactory: SocketFactory;
  data: WorkerPort;
  training: WorkerPort;
  ldp: WorkerPort;
  events?: SessionEvents;
  maxAttempts?: number;
  reconnectDelayMs?: number;
}

export class Session {
  phase: SessionPhase = "disconnected";
  task: TaskConfig | null = null;
  clientIndex: number | null = null;
  round = 0;
  roundsTrained = 0;
  uploadsSent = 0;
  lastLocalLoss: number | null = null;
  phaseHistory: SessionPhase[] = [];

  private socket: SocketLike | null = null;
  private shardSize = 0;
  private dataReady = false;
  private attempts = 0;
  private stopping = false;
  private uploadedRounds = new Set<number>();
  private done: Promise<void>;
  private finish!: () => void;
  private fail!: (err: Error) => void;

  constructor(private opts: SessionOptions) {
    this.done = new Promise((resolve, reject) => {
      this.finish = resolve;
      this.fail = reject;
    });
    opts.data.onMessage((msg) => this.onDataMessage(msg));
    opts.training.onMessage((msg) => this.onTrainingMessage(msg));
    opts.ldp.onMessage((msg) => this.onLdpMessage(msg));
  }

  private setPhase(phase: SessionPhase): void {
    this.phase = phase;
    this.phaseHistory.push(phase);
    this.opts.events?.phase?.(phase);
  }

  private log(line: string): void {
    this.opts.events?.log?.(line);
  }

  start(): Promise<void> {
    this.opts.data.post({ type: "load_data", source: this.opts.dataSource });
    return this.done;
  }

  stop(): void {
    this.stopping = true;
    this.socket?.close();
    this.setPhase("disconnected");
    this.finish();
  }

  private onDataMessage(msg: WorkerMessage): void {
    if (msg.type === "worker_error") return this.abort(msg.message);
    if (msg.type !== "data_ready") return;
    this.shardSize = msg.n;
    this.dataReady = true;
    this.opts.training.post({ type: "set_data", shard: msg.shard });
    this.log(`shard ready: ${msg.n} samples`);
    this.connect();
  }

  private connect(): void {
    if (!this.dataReady || this.stopping) return;
    this.attempts += 1;
    this.setPhase("connecting");
    const socket = this.opts.socketFactory(this.opts.url, "webfed.v1");
    this.socket = socket;
    socket.onOpen(() => {
      this.setPhase("registering");
      socket.send(
        encode({
          type: "register",
          client_id: this.opts.clientId,
          num_samples: this.shardSize,
          protocol: PROTOCOL_VERSION,
        }),
      );
    });
    socket.onFrame((data) => {
      try {
        this.onServerMessage(decode(data));
      } catch (exc) {
        this.abort(`bad frame from server: ${exc}`);
      }
    });
    socket.onClose(() => this.onSocketClosed());
    socket.onError((message) => this.log(`socket error: ${message}`));
  }

  private onSocketClosed(): void {
    if (this.stopping || this.phase === "complete") return;
    const max = this.opts.maxAttempts ?? 5;
    if (this.attempts >= max) {
      return this.abort(`connection lost and ${max} attempts exhausted`);
    }
    this.log(`connection lost, reconnecting (attempt ${this.attempts + 1}/${max})`);
    this.setPhase("connecting");
    const delay = this.opts.reconnectDelayMs ?? 500;
    setTimeout(() => this.connect(), delay * this.attempts);
  }

  private onServerMessage(msg: FedMessage): void {
    switch (msg.type) {
      case "register_ack":
        this.clientIndex = msg.client_index;
        this.task = msg.task;
        this.attempts = 0;
        this.setPhase("idle");
        this.opts.events?.task?.(msg.task, msg.client_index);
        this.log(`registered as client ${msg.client_index}`);
        return;
      case "global_model":
        this.onGlobalModel(msg.round, msg.selected, msg.weights);
        return;
      case "round_metrics":
        this.opts.events?.metrics?.(msg.round, msg.accuracy, msg.loss);
        return;
      case "shutdown":
        this.stopping = true;
        this.setPhase("complete");
        this.log("session complete");
        this.socket?.close();
        this.finish();
        return;
      default:
        this.log(`ignoring unexpected ${msg.type}`);
    }
  }

  private onGlobalModel(round: number, selected: boolean, weights: WeightsBundle): void {
    if (!this.task) return this.abort("global model before registration ack");
    if (round < this.round) {
      this.log(`ignoring stale round ${round}`);
      return;
    }
    if (!matchesArchitecture(weights)) {
      return this.abort("broadcast weights do not match the task architecture");
    }
    this.round = round;
    this.opts.events?.round?.(round, this.roundsTrained);
    if (!selected || this.phase !== "idle" || this.uploadedRounds.has(round)) return;
    this.setPhase("training");
    this.opts.training.post({
      type: "train",
      round,
      weights,
      eta: this.task.hyper.eta,
      local_epochs: this.task.hyper.local_epochs,
      batch_size: this.task.hyper.batch_size,
      seed: this.task.hyper.seed ^ (this.clientIndex ?? 0),
    });
  }

  private onTrainingMessage(msg: WorkerMessage): void {
    if (msg.type === "worker_error") return this.abort(msg.message);
    if (msg.type !== "trained" || !this.task) return;
    this.lastLocalLoss = msg.loss;
    this.roundsTrained += 1;
    this.opts.events?.localLoss?.(msg.loss);
    this.setPhase("perturbing");
    this.opts.ldp.post({
      type: "perturb",
      round: msg.round,
      weights: msg.weights,
      epsilon: this.task.privacy.epsilon,
      clip: this.task.privacy.clip,
      seed: (this.task.hyper.seed ^ (msg.round * 2654435761) ^ ((this.clientIndex ?? 0) + 1)) >>> 0,
    });
  }

  private onLdpMessage(msg: WorkerMessage): void {
    if (msg.type === "worker_error") return this.abort(msg.message);
    if (msg.type !== "perturbed") return;
    if (this.uploadedRounds.has(msg.round)) return; // never double-upload
    this.setPhase("uploading");
    this.socket?.send(
      encode({
        type: "local_update",
        round: msg.round,
        client_id: this.opts.clientId,
        num_samples: this.shardSize,
        weights: msg.weights,
      }),
    );
    this.uploadedRounds.add(msg.round);
    this.uploadsSent += 1;
    this.setPhase("idle");
  }

  private abort(message: string): void {
    this.setPhase("error");
    this.opts.events?.error?.(message);
    this.stopping = true;
    this.socket?.close();
    this.fail(new Error(message));
  }
}
