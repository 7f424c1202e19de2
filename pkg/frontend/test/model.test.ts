// Training math against the reference implementation's frozen fixture.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { decodeWeights } from "../src/proto.js";
import { forward, lossAndGrad, sgdStep, browserTrain } from "../src/model.js";
import { synthShard } from "../src/synth.js";

const fixture = JSON.parse(
  readFileSync(fileURLToPath(new URL("../fixtures/train_step_fixture.json", import.meta.url)), "utf-8"),
);

function decodeF32(b64: string): Float32Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  const view = new DataView(bytes.buffer);
  const out = new Float32Array(bytes.length / 4);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat32(i * 4, true);
  return out;
}

const images = decodeF32(fixture.batch.images);
const labels = new Uint8Array(fixture.batch.labels);
const n = fixture.batch.n as number;

describe("single-step parity with the reference implementation", () => {
  const weights = decodeWeights(fixture.weights);
  const expected = decodeWeights(fixture.expected);

  it("loss matches", () => {
    const { loss } = lossAndGrad(weights, images, labels, n);
    expect(Math.abs(loss - fixture.loss)).toBeLessThan(1e-5);
  });

  it("one full-batch SGD step matches within 1e-4 per coordinate", () => {
    const { grads } = lossAndGrad(weights, images, labels, n);
    const stepped = sgdStep(weights, grads, fixture.eta);
    let worst = 0;
    for (let t = 0; t < stepped.length; t++) {
      expect(stepped[t].name).toBe(expected[t].name);
      for (let i = 0; i < stepped[t].data.length; i++) {
        worst = Math.max(worst, Math.abs(stepped[t].data[i] - expected[t].data[i]));
      }
    }
    expect(worst).toBeLessThan(fixture.tolerance);
  });
});

describe("training behavior", () => {
  it("zero eta returns identical weights", () => {
    const weights = decodeWeights(fixture.weights);
    const shard = synthShard(20, 3);
    const { weights: out } = browserTrain(weights, shard, {
      eta: 0,
      local_epochs: 1,
      batch_size: 8,
      seed: 5,
      round: 1,
    });
    for (let t = 0; t < out.length; t++) {
      expect(Array.from(out[t].data)).toEqual(Array.from(weights[t].data));
    }
  });

  it("loss trends down over a few epochs on the synthetic shard", () => {
    let weights = decodeWeights(fixture.weights);
    const shard = synthShard(60, 4);
    const losses: number[] = [];
    for (let round = 1; round <= 5; round++) {
      const res = browserTrain(weights, shard, {
        eta: 0.1,
        local_epochs: 1,
        batch_size: 16,
        seed: 9,
        round,
      });
      weights = res.weights;
      losses.push(res.loss);
    }
    expect(losses[4]).toBeLessThan(losses[0]);
  });

  it("forward produces finite logits with the right length", () => {
    const weights = decodeWeights(fixture.weights);
    const logits = forward(weights, images.subarray(0, 3 * 784), 3);
    expect(logits.length).toBe(30);
    for (const v of logits) expect(Number.isFinite(v)).toBe(true);
  });
});
