// Thin shim: the LDP Worker runs LdpEngine off the UI thread.
import { LdpEngine } from "../engine/ldp.js";
import { WorkerMessage } from "../messages.js";

const engine = new LdpEngine();
const scope = self as unknown as {
  onmessage: ((e: MessageEvent<WorkerMessage>) => void) | null;
  postMessage(msg: WorkerMessage): void;
};
scope.onmessage = (e) => {
  const reply = engine.handle(e.data);
  if (reply) scope.postMessage(reply);
};
