// IDX (MNIST container) parsing for user-dropped files: big-endian u32
// magic + dimension headers, u8 payload, pixels scaled to [0, 1].

import { Dataset } from "./model.js";

export class IdxFormatError extends Error {}
export class IdxLengthError extends Error {}
export class IdxConsistencyError extends Error {}

const IMAGES_MAGIC = 0x00000803;
const LABELS_MAGIC = 0x00000801;
const SIDE = 28;

export function parseIdx(imagesBuf: ArrayBuffer, labelsBuf: ArrayBuffer): Dataset {
  const img = new DataView(imagesBuf);
  if (img.byteLength < 16) throw new IdxFormatError("images file too short for an IDX header");
  if (img.getUint32(0) !== IMAGES_MAGIC) {
    throw new IdxFormatError(`images magic mismatch: ${img.getUint32(0)}`);
  }
  const n = img.getUint32(4);
  const rows = img.getUint32(8);
  const cols = img.getUint32(12);
  if (rows !== SIDE || cols !== SIDE) {
    throw new IdxFormatError(`expected 28x28 images, header says ${rows}x${cols}`);
  }
  if (img.byteLength - 16 !== n * rows * cols) {
    throw new IdxLengthError(
      `images payload holds ${img.byteLength - 16} bytes, header promises ${n * rows * cols}`,
    );
  }
  const lbl = new DataView(labelsBuf);
  if (lbl.byteLength < 8) throw new IdxFormatError("labels file too short for an IDX header");
  if (lbl.getUint32(0) !== LABELS_MAGIC) {
    throw new IdxFormatError(`labels magic mismatch: ${lbl.getUint32(0)}`);
  }
  const nLabels = lbl.getUint32(4);
  if (lbl.byteLength - 8 !== nLabels) {
    throw new IdxLengthError(
      `labels payload holds ${lbl.byteLength - 8} bytes, header promises ${nLabels}`,
    );
  }
  if (n !== nLabels) throw new IdxConsistencyError(`${n} images but ${nLabels} labels`);

  const rawPixels = new Uint8Array(imagesBuf, 16);
  const images = new Float32Array(n * SIDE * SIDE);
  for (let i = 0; i < images.length; i++) images[i] = rawPixels[i] / 255;
  const labels = new Uint8Array(labelsBuf, 8).slice();
  for (const label of labels) {
    if (label > 9) throw new IdxConsistencyError(`label ${label} out of range`);
  }
  return { n, images, labels };
}
