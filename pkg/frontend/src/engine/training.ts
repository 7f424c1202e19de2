// Training worker core: holds the shard and runs local mini-batch SGD.

import { browserTrain, Dataset } from "../model.js";
import { WorkerMessage } from "../messages.js";

export class TrainingEngine {
  private shard: Dataset | null = null;

  handle(msg: WorkerMessage): WorkerMessage | null {
    if (msg.type === "set_data") {
      this.shard = msg.shard;
      return null;
    }
    if (msg.type !== "train") return null;
    if (!this.shard) return { type: "worker_error", message: "no shard loaded" };
    try {
      const { weights, loss } = browserTrain(msg.weights, this.shard, {
        eta: msg.eta,
        local_epochs: msg.local_epochs,
        batch_size: msg.batch_size,
        seed: msg.seed,
        round: msg.round,
      });
      return { type: "trained", round: msg.round, weights, loss };
    } catch (exc) {
      return { type: "worker_error", message: String(exc) };
    }
  }
}
