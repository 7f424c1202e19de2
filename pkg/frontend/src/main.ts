// Browser wiring: DOM controls, real Web Workers, native WebSocket.

import { Session, SocketLike } from "./session.js";
import { WorkerMessage, WorkerPort, DataSource } from "./messages.js";
import { WS_SUBPROTOCOL } from "./proto.js";

function workerPort(worker: Worker): WorkerPort {
  return {
    post: (msg: WorkerMessage) => worker.postMessage(msg),
    onMessage: (cb) => {
      worker.onmessage = (e: MessageEvent<WorkerMessage>) => cb(e.data);
    },
  };
}

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url, [WS_SUBPROTOCOL]);
  return {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onOpen: (cb) => ws.addEventListener("open", cb),
    onFrame: (cb) => ws.addEventListener("message", (e) => cb(String(e.data))),
    onClose: (cb) => ws.addEventListener("close", () => cb()),
    onError: (cb) => ws.addEventListener("error", () => cb("websocket error")),
  };
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function randomUuid(): string {
  return crypto.randomUUID();
}

let session: Session | null = null;

async function readFile(input: HTMLInputElement): Promise<ArrayBuffer | null> {
  const file = input.files?.[0];
  if (!file) return null;
  return await file.arrayBuffer();
}

async function pickDataSource(): Promise<DataSource> {
  const images = await readFile(el<HTMLInputElement>("images-file"));
  const labels = await readFile(el<HTMLInputElement>("labels-file"));
  if (images && labels) return { kind: "idx", images, labels };
  const n = parseInt(el<HTMLInputElement>("synth-n").value || "120", 10);
  return { kind: "synth", n };
}

function appendLog(line: string): void {
  const log = el<HTMLUListElement>("log");
  const item = document.createElement("li");
  item.textContent = line;
  log.prepend(item);
  while (log.childElementCount > 200) log.lastElementChild?.remove();
}

async function connect(): Promise<void> {
  const url = el<HTMLInputElement>("server-url").value.trim();
  if (!url) {
    el("error-banner").textContent = "enter a server URL first";
    return;
  }
  el("error-banner").textContent = "";
  const dataSource = await pickDataSource();

  session = new Session({
    url,
    clientId: randomUuid(),
    dataSource,
    socketFactory: (u) => browserSocket(u),
    data: workerPort(new Worker(new URL("./workers/data.worker.js", import.meta.url), { type: "module" })),
    training: workerPort(
      new Worker(new URL("./workers/training.worker.js", import.meta.url), { type: "module" }),
    ),
    ldp: workerPort(new Worker(new URL("./workers/ldp.worker.js", import.meta.url), { type: "module" })),
    events: {
      phase: (phase) => {
        el("status").textContent = phase;
      },
      task: (task, index) => {
        el("task-card").hidden = false;
        el("task-arch").textContent = task.architecture_id;
        el("task-epsilon").textContent =
          task.privacy.epsilon === null ? "noise-free" : `ε=${task.privacy.epsilon}`;
        el("task-clip").textContent = String(task.privacy.clip);
        el("task-eta").textContent = String(task.hyper.eta);
        el("task-rounds").textContent = String(task.rounds_total);
        el("client-index").textContent = String(index);
      },
      round: (round, trained) => {
        el("round-now").textContent = String(round);
        el("rounds-trained").textContent = String(trained);
      },
      localLoss: (loss) => {
        el("local-loss").textContent = loss.toFixed(4);
      },
      metrics: (round, accuracy, loss) => {
        appendLog(`round ${round}: global accuracy ${(accuracy * 100).toFixed(1)}%, loss ${loss.toFixed(3)}`);
      },
      log: appendLog,
      error: (message) => {
        el("error-banner").textContent = `${message} (press Connect to retry)`;
      },
    },
  });
  session.start().catch(() => undefined);
}

el<HTMLButtonElement>("connect-btn").addEventListener("click", () => void connect());
el<HTMLButtonElement>("disconnect-btn").addEventListener("click", () => session?.stop());
