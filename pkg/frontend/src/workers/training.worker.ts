// Thin shim: the Training Worker runs TrainingEngine off the UI thread.
import { TrainingEngine } from "../engine/training.js";
import { WorkerMessage } from "../messages.js";

const engine = new TrainingEngine();
const scope = self as unknown as {
  onmessage: ((e: MessageEvent<WorkerMessage>) => void) | null;
  postMessage(msg: WorkerMessage): void;
};
scope.onmessage = (e) => {
  const reply = engine.handle(e.data);
  if (reply) scope.postMessage(reply);
};
