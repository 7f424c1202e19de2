// Bundled synthetic shard: seeded noise plus one bright class patch per
// image, separable enough for quick live demos without any dataset.

import { Dataset, mulberry32 } from "./model.js";

const SIDE = 28;
const PATCH = 6;
const NOISE = 0.25;

function patchOrigin(k: number): [number, number] {
  return [4 + 12 * Math.floor(k / 5), 1 + 5 * (k % 5)];
}

export function synthShard(n: number, seed = 1): Dataset {
  const rand = mulberry32(seed >>> 0);
  const images = new Float32Array(n * SIDE * SIDE);
  const labels = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const k = i % 10;
    labels[i] = k;
    const base = i * SIDE * SIDE;
    for (let p = 0; p < SIDE * SIDE; p++) images[base + p] = rand() * NOISE;
    const [r0, c0] = patchOrigin(k);
    for (let dy = 0; dy < PATCH; dy++) {
      for (let dx = 0; dx < PATCH; dx++) {
        images[base + (r0 + dy) * SIDE + (c0 + dx)] = 1.0;
      }
    }
  }
  return { n, images, labels };
}
