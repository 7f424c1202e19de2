// LDP worker core: clip-then-noise, exactly in that order.

import { perturb } from "../ldp.js";
import { WorkerMessage } from "../messages.js";

export class LdpEngine {
  handle(msg: WorkerMessage): WorkerMessage | null {
    if (msg.type !== "perturb") return null;
    try {
      return {
        type: "perturbed",
        round: msg.round,
        weights: perturb(msg.weights, msg.epsilon, msg.clip, msg.seed),
      };
    } catch (exc) {
      return { type: "worker_error", message: String(exc) };
    }
  }
}
