// Local differential privacy: clip every coordinate to [-C, C], then add
// Laplace(0, 2C/eps) noise per coordinate via the inverse CDF
//   x = -b * sgn(u) * ln(1 - 2|u|),  u uniform on (-0.5, 0.5).
// Clip always runs before noise; noise-free mode returns the clipped
// weights bit-for-bit.

import { WeightsBundle } from "./proto.js";
import { mulberry32 } from "./model.js";

export function clipWeights(weights: WeightsBundle, clip: number): WeightsBundle {
  if (!(clip > 0)) throw new Error(`clip bound must be > 0, got ${clip}`);
  let c = Math.fround(clip);
  if (c > clip) c = nextDown(c); // float32 rounding must not widen the bound
  return weights.map((t) => {
    const out = new Float32Array(t.data.length);
    for (let i = 0; i < out.length; i++) {
      out[i] = Math.min(c, Math.max(-c, t.data[i]));
    }
    return { name: t.name, shape: [...t.shape], data: out };
  });
}

function nextDown(x: number): number {
  const buf = new Float32Array(1);
  const ints = new Int32Array(buf.buffer);
  buf[0] = x;
  ints[0] -= x > 0 ? 1 : -1;
  return buf[0];
}

export function laplaceFromUniform(u: number, b: number): number {
  const sign = u > 0 ? 1 : u < 0 ? -1 : 0;
  return -b * sign * Math.log1p(-2 * Math.abs(u));
}

export function laplaceSamples(b: number, seed: number, n: number): Float64Array {
  const out = new Float64Array(n);
  if (b === 0) return out;
  const rand = mulberry32(seed >>> 0);
  for (let i = 0; i < n; i++) {
    let u = rand() - 0.5;
    if (u <= -0.5) u = -0.4999999999;
    out[i] = laplaceFromUniform(u, b);
  }
  return out;
}

export function perturb(
  weights: WeightsBundle, epsilon: number | null, clip: number, seed: number,
): WeightsBundle {
  const clipped = clipWeights(weights, clip);
  if (epsilon === null) return clipped;
  if (!(epsilon > 0)) throw new Error(`epsilon must be > 0, got ${epsilon}`);
  const b = (2 * clip) / epsilon;
  const total = clipped.reduce((acc, t) => acc + t.data.length, 0);
  const noise = laplaceSamples(b, seed, total);
  let off = 0;
  return clipped.map((t) => {
    const out = new Float32Array(t.data.length);
    for (let i = 0; i < out.length; i++) out[i] = t.data[i] + noise[off + i];
    off += t.data.length;
    return { name: t.name, shape: [...t.shape], data: out };
  });
}
