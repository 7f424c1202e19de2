// Fixed LeNet-style CNN for 28x28x1 inputs, mirroring the server task:
// conv5x5(8) -> relu -> pool2 -> conv5x5(16) -> relu -> pool2 -> dense(10).
// Weights live in Float32Array tensors; intermediate math uses JS doubles
// and rounds at each stored activation boundary, which stays well inside
// the 1e-4 cross-implementation tolerance for a single step.

import { Tensor, WeightsBundle } from "./proto.js";

export const ARCHITECTURE_ID = "lenet-mnist-v1";

export interface Dataset {
  n: number;
  images: Float32Array; // [n,28,28,1] row-major
  labels: Uint8Array;
}

const S1 = 28, C1 = 24, P1 = 12, C2 = 8, P2 = 4;
const K = 5, F1 = 8, F2 = 16, CLASSES = 10, FLAT = P2 * P2 * F2;

export function tensorByName(weights: WeightsBundle, name: string): Tensor {
  const t = weights.find((t) => t.name === name);
  if (!t) throw new Error(`missing tensor ${name}`);
  return t;
}

export function zerosLike(weights: WeightsBundle): WeightsBundle {
  return weights.map((t) => ({ name: t.name, shape: [...t.shape], data: new Float32Array(t.data.length) }));
}

export function matchesArchitecture(weights: WeightsBundle): boolean {
  const expect: Array<[string, number]> = [
    ["conv1.w", K * K * 1 * F1], ["conv1.b", F1],
    ["conv2.w", K * K * F1 * F2], ["conv2.b", F2],
    ["dense1.w", FLAT * CLASSES], ["dense1.b", CLASSES],
  ];
  return (
    weights.length === expect.length &&
    expect.every(([name, len], i) => weights[i].name === name && weights[i].data.length === len)
  );
}

interface ForwardCache {
  z1: Float32Array; p1: Float32Array; i1: Int32Array;
  z2: Float32Array; p2: Float32Array; i2: Int32Array;
  logits: Float32Array;
}

function convForward(
  x: Float32Array, batch: number, side: number, cin: number,
  w: Float32Array, b: Float32Array, cout: number, out: Float32Array,
): void {
  const oside = side - K + 1;
  for (let n = 0; n < batch; n++) {
    for (let y = 0; y < oside; y++) {
      for (let xx = 0; xx < oside; xx++) {
        const outBase = ((n * oside + y) * oside + xx) * cout;
        for (let co = 0; co < cout; co++) out[outBase + co] = b[co];
        for (let ky = 0; ky < K; ky++) {
          for (let kx = 0; kx < K; kx++) {
            const inBase = ((n * side + y + ky) * side + (xx + kx)) * cin;
            const wBase = (ky * K + kx) * cin * cout;
            for (let ci = 0; ci < cin; ci++) {
              const xv = x[inBase + ci];
              if (xv === 0) continue;
              const wRow = wBase + ci * cout;
              for (let co = 0; co < cout; co++) {
                out[outBase + co] += xv * w[wRow + co];
              }
            }
          }
        }
      }
    }
  }
}

function reluInPlace(z: Float32Array, into: Float32Array): void {
  for (let i = 0; i < z.length; i++) into[i] = z[i] > 0 ? z[i] : 0;
}

function poolForward(
  a: Float32Array, batch: number, side: number, ch: number,
  out: Float32Array, argmax: Int32Array,
): void {
  const oside = side / 2;
  for (let n = 0; n < batch; n++) {
    for (let y = 0; y < oside; y++) {
      for (let x = 0; x < oside; x++) {
        for (let c = 0; c < ch; c++) {
          let best = -Infinity;
          let bestK = 0;
          // scan order matches the reference: (dy,dx) = 00,01,10,11
          for (let k = 0; k < 4; k++) {
            const dy = k >> 1, dx = k & 1;
            const v = a[((n * side + 2 * y + dy) * side + (2 * x + dx)) * ch + c];
            if (v > best) { best = v; bestK = k; }
          }
          const o = ((n * oside + y) * oside + x) * ch + c;
          out[o] = best;
          argmax[o] = bestK;
        }
      }
    }
  }
}

function forwardCached(weights: WeightsBundle, images: Float32Array, batch: number): ForwardCache {
  const w1 = tensorByName(weights, "conv1.w").data, b1 = tensorByName(weights, "conv1.b").data;
  const w2 = tensorByName(weights, "conv2.w").data, b2 = tensorByName(weights, "conv2.b").data;
  const w3 = tensorByName(weights, "dense1.w").data, b3 = tensorByName(weights, "dense1.b").data;

  const z1 = new Float32Array(batch * C1 * C1 * F1);
  convForward(images, batch, S1, 1, w1, b1, F1, z1);
  const a1 = new Float32Array(z1.length);
  reluInPlace(z1, a1);
  const p1 = new Float32Array(batch * P1 * P1 * F1);
  const i1 = new Int32Array(p1.length);
  poolForward(a1, batch, C1, F1, p1, i1);

  const z2 = new Float32Array(batch * C2 * C2 * F2);
  convForward(p1, batch, P1, F1, w2, b2, F2, z2);
  const a2 = new Float32Array(z2.length);
  reluInPlace(z2, a2);
  const p2 = new Float32Array(batch * P2 * P2 * F2);
  const i2 = new Int32Array(p2.length);
  poolForward(a2, batch, C2, F2, p2, i2);

  const logits = new Float32Array(batch * CLASSES);
  for (let n = 0; n < batch; n++) {
    for (let c = 0; c < CLASSES; c++) logits[n * CLASSES + c] = b3[c];
    for (let f = 0; f < FLAT; f++) {
      const v = p2[n * FLAT + f];
      if (v === 0) continue;
      const row = f * CLASSES;
      for (let c = 0; c < CLASSES; c++) logits[n * CLASSES + c] += v * w3[row + c];
    }
  }
  return { z1, p1, i1, z2, p2, i2, logits };
}

export function forward(weights: WeightsBundle, images: Float32Array, batch: number): Float32Array {
  return forwardCached(weights, images, batch).logits;
}

function convBackward(
  dz: Float32Array, input: Float32Array, batch: number, side: number, cin: number,
  w: Float32Array, cout: number, dw: Float32Array, db: Float32Array, dinput: Float32Array | null,
): void {
  const oside = side - K + 1;
  for (let n = 0; n < batch; n++) {
    for (let y = 0; y < oside; y++) {
      for (let xx = 0; xx < oside; xx++) {
        const dzBase = ((n * oside + y) * oside + xx) * cout;
        for (let co = 0; co < cout; co++) db[co] += dz[dzBase + co];
        for (let ky = 0; ky < K; ky++) {
          for (let kx = 0; kx < K; kx++) {
            const inBase = ((n * side + y + ky) * side + (xx + kx)) * cin;
            const wBase = (ky * K + kx) * cin * cout;
            for (let ci = 0; ci < cin; ci++) {
              const xv = input[inBase + ci];
              const wRow = wBase + ci * cout;
              let dIn = 0;
              for (let co = 0; co < cout; co++) {
                const g = dz[dzBase + co];
                dw[wRow + co] += xv * g;
                dIn += w[wRow + co] * g;
              }
              if (dinput) dinput[inBase + ci] += dIn;
            }
          }
        }
      }
    }
  }
}

function poolBackward(
  dout: Float32Array, argmax: Int32Array, batch: number, side: number, ch: number,
): Float32Array {
  const oside = side / 2;
  const dx = new Float32Array(batch * side * side * ch);
  for (let n = 0; n < batch; n++) {
    for (let y = 0; y < oside; y++) {
      for (let x = 0; x < oside; x++) {
        for (let c = 0; c < ch; c++) {
          const o = ((n * oside + y) * oside + x) * ch + c;
          const k = argmax[o];
          const dy = k >> 1, dxx = k & 1;
          dx[((n * side + 2 * y + dy) * side + (2 * x + dxx)) * ch + c] = dout[o];
        }
      }
    }
  }
  return dx;
}

export function lossAndGrad(
  weights: WeightsBundle, images: Float32Array, labels: Uint8Array, batch: number,
): { loss: number; grads: WeightsBundle } {
  const cache = forwardCached(weights, images, batch);
  const { z1, p1, i1, z2, p2, i2, logits } = cache;
  const w2 = tensorByName(weights, "conv2.w").data;
  const w3 = tensorByName(weights, "dense1.w").data;

  const grads = zerosLike(weights);
  const dw1 = tensorByName(grads, "conv1.w").data, db1 = tensorByName(grads, "conv1.b").data;
  const dw2 = tensorByName(grads, "conv2.w").data, db2 = tensorByName(grads, "conv2.b").data;
  const dw3 = tensorByName(grads, "dense1.w").data, db3 = tensorByName(grads, "dense1.b").data;

  // softmax cross-entropy with mean reduction
  let loss = 0;
  const dlogits = new Float32Array(batch * CLASSES);
  for (let n = 0; n < batch; n++) {
    let max = -Infinity;
    for (let c = 0; c < CLASSES; c++) max = Math.max(max, logits[n * CLASSES + c]);
    let sum = 0;
    for (let c = 0; c < CLASSES; c++) sum += Math.exp(logits[n * CLASSES + c] - max);
    const logSum = Math.log(sum);
    loss += -(logits[n * CLASSES + labels[n]] - max - logSum);
    for (let c = 0; c < CLASSES; c++) {
      const p = Math.exp(logits[n * CLASSES + c] - max - logSum);
      dlogits[n * CLASSES + c] = (p - (labels[n] === c ? 1 : 0)) / batch;
    }
  }
  loss /= batch;

  const dflat = new Float32Array(batch * FLAT);
  for (let n = 0; n < batch; n++) {
    for (let c = 0; c < CLASSES; c++) db3[c] += dlogits[n * CLASSES + c];
    for (let f = 0; f < FLAT; f++) {
      const v = p2[n * FLAT + f];
      const row = f * CLASSES;
      let acc = 0;
      for (let c = 0; c < CLASSES; c++) {
        const g = dlogits[n * CLASSES + c];
        dw3[row + c] += v * g;
        acc += w3[row + c] * g;
      }
      dflat[n * FLAT + f] = acc;
    }
  }

  const da2 = poolBackward(dflat, i2, batch, C2, F2);
  for (let i = 0; i < da2.length; i++) if (z2[i] <= 0) da2[i] = 0;
  const dp1 = new Float32Array(batch * P1 * P1 * F1);
  convBackward(da2, p1, batch, P1, F1, w2, F2, dw2, db2, dp1);

  const da1 = poolBackward(dp1, i1, batch, C1, F1);
  for (let i = 0; i < da1.length; i++) if (z1[i] <= 0) da1[i] = 0;
  convBackward(da1, images, batch, S1, 1, tensorByName(weights, "conv1.w").data, F1, dw1, db1, null);

  return { loss, grads };
}

export function sgdStep(weights: WeightsBundle, grads: WeightsBundle, eta: number): WeightsBundle {
  const e = Math.fround(eta);
  return weights.map((t, i) => {
    const g = grads[i].data;
    const out = new Float32Array(t.data.length);
    for (let j = 0; j < out.length; j++) out[j] = t.data[j] - e * g[j];
    return { name: t.name, shape: [...t.shape], data: out };
  });
}

// mulberry32: tiny seeded PRNG; the browser's uniform source is its own
// (cross-implementation bit-equality of shuffles is not a goal).
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(n: number, rand: () => number): Int32Array {
  const order = new Int32Array(n);
  for (let i = 0; i < n; i++) order[i] = i;
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    const tmp = order[i];
    order[i] = order[j];
    order[j] = tmp;
  }
  return order;
}

export interface TrainSettings {
  eta: number;
  local_epochs: number;
  batch_size: number;
  seed: number;
  round: number;
}

export function browserTrain(
  weights: WeightsBundle, shard: Dataset, settings: TrainSettings,
): { weights: WeightsBundle; loss: number } {
  const pixels = S1 * S1;
  let w = weights;
  let epochLoss = 0;
  for (let epoch = 0; epoch < settings.local_epochs; epoch++) {
    const rand = mulberry32((settings.seed ^ (settings.round * 0x9e3779b9) ^ (epoch * 0x85ebca6b)) >>> 0);
    const order = shuffled(shard.n, rand);
    let lossSum = 0;
    for (let start = 0; start < shard.n; start += settings.batch_size) {
      const size = Math.min(settings.batch_size, shard.n - start);
      const images = new Float32Array(size * pixels);
      const labels = new Uint8Array(size);
      for (let i = 0; i < size; i++) {
        const src = order[start + i];
        images.set(shard.images.subarray(src * pixels, (src + 1) * pixels), i * pixels);
        labels[i] = shard.labels[src];
      }
      const { loss, grads } = lossAndGrad(w, images, labels, size);
      w = sgdStep(w, grads, settings.eta);
      lossSum += loss * size;
    }
    epochLoss = lossSum / shard.n;
  }
  return { weights: w, loss: epochLoss };
}
