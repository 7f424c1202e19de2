// Data worker core: loads and pre-processes the local shard.

import { WorkerMessage } from "../messages.js";
import { parseIdx } from "../idx.js";
import { synthShard } from "../synth.js";

export class DataEngine {
  handle(msg: WorkerMessage): WorkerMessage | null {
    if (msg.type !== "load_data") return null;
    try {
      const shard =
        msg.source.kind === "synth"
          ? synthShard(msg.source.n, msg.source.seed ?? 1)
          : parseIdx(msg.source.images, msg.source.labels);
      return { type: "data_ready", n: shard.n, shard };
    } catch (exc) {
      return { type: "worker_error", message: String(exc) };
    }
  }
}
