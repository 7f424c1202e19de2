// Internal messages between the UI session and its three workers.

import { Dataset } from "./model.js";
import { WeightsBundle } from "./proto.js";

export type DataSource =
  | { kind: "synth"; n: number; seed?: number }
  | { kind: "idx"; images: ArrayBuffer; labels: ArrayBuffer };

export type WorkerMessage =
  | { type: "load_data"; source: DataSource }
  | { type: "data_ready"; n: number; shard: Dataset }
  | { type: "set_data"; shard: Dataset }
  | {
      type: "train";
      round: number;
      weights: WeightsBundle;
      eta: number;
      local_epochs: number;
      batch_size: number;
      seed: number;
    }
  | { type: "trained"; round: number; weights: WeightsBundle; loss: number }
  | { type: "perturb"; round: number; weights: WeightsBundle; epsilon: number | null; clip: number; seed: number }
  | { type: "perturbed"; round: number; weights: WeightsBundle }
  | { type: "worker_error"; message: string };

export interface WorkerPort {
  post(msg: WorkerMessage): void;
  onMessage(cb: (msg: WorkerMessage) => void): void;
}
