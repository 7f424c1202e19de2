// Thin shim: the Data Worker runs DataEngine off the UI thread.
import { DataEngine } from "../engine/data.js";
import { WorkerMessage } from "../messages.js";

const engine = new DataEngine();
const scope = self as unknown as {
  onmessage: ((e: MessageEvent<WorkerMessage>) => void) | null;
  postMessage(msg: WorkerMessage): void;
};
scope.onmessage = (e) => {
  const reply = engine.handle(e.data);
  if (reply) scope.postMessage(reply);
};
