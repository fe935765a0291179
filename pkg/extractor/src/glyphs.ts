/**
 * Procedural 16x16 grayscale corpora.
 *
 * In-distribution: seven-segment digit glyphs (classes 0..9) with random
 * shift, per-sample intensity and pixel noise. Out-of-distribution:
 * apparel-like silhouettes (tee, trousers, pullover, bag) rendered with
 * the same jitter model, labeled -1.
 */
import { Rng } from "./rng.js";

export const SIDE = 16;
export const PIXELS = SIDE * SIDE;
export const N_CLASSES = 10;

export interface Corpus {
  images: Float32Array; // n x PIXELS, row major, values in [0, 1]
  labels: Int32Array; // n, class id or -1
  n: number;
}

// Segment boxes as [rowLo, rowHi, colLo, colHi], inclusive, on the 16x16 grid.
const SEGMENTS: Record<string, [number, number, number, number]> = {
  a: [1, 2, 4, 11],
  b: [2, 7, 11, 12],
  c: [8, 13, 11, 12],
  d: [13, 14, 4, 11],
  e: [8, 13, 3, 4],
  f: [2, 7, 3, 4],
  g: [7, 8, 4, 11],
};

const DIGIT_SEGMENTS: string[] = [
  "abcdef", // 0
  "bc", // 1
  "abged", // 2
  "abgcd", // 3
  "fgbc", // 4
  "afgcd", // 5
  "afgedc", // 6
  "abc", // 7
  "abcdefg", // 8
  "abcdfg", // 9
];

function fillBox(
  img: Float32Array,
  rowLo: number,
  rowHi: number,
  colLo: number,
  colHi: number,
  dy: number,
  dx: number,
  value: number,
): void {
  for (let r = rowLo + dy; r <= rowHi + dy; r++) {
    if (r < 0 || r >= SIDE) continue;
    for (let c = colLo + dx; c <= colHi + dx; c++) {
      if (c < 0 || c >= SIDE) continue;
      img[r * SIDE + c] = value;
    }
  }
}

function jitterAndNoise(img: Float32Array, rng: Rng): void {
  const gain = 0.7 + 0.3 * rng.next();
  for (let i = 0; i < PIXELS; i++) {
    const v = img[i] * gain + 0.08 * rng.normal();
    img[i] = Math.min(1, Math.max(0, v));
  }
}

export function renderDigit(digit: number, rng: Rng): Float32Array {
  if (digit < 0 || digit >= N_CLASSES) {
    throw new Error(`digit out of range: ${digit}`);
  }
  const img = new Float32Array(PIXELS);
  const dy = rng.int(-1, 1);
  const dx = rng.int(-2, 2);
  for (const s of DIGIT_SEGMENTS[digit]) {
    const [rl, rh, cl, ch] = SEGMENTS[s];
    fillBox(img, rl, rh, cl, ch, dy, dx, 1);
  }
  jitterAndNoise(img, rng);
  return img;
}

function renderTee(img: Float32Array, dy: number, dx: number): void {
  fillBox(img, 2, 4, 1, 14, dy, dx, 1); // sleeves bar
  fillBox(img, 4, 13, 5, 10, dy, dx, 1); // torso
}

function renderTrousers(img: Float32Array, dy: number, dx: number): void {
  fillBox(img, 2, 4, 4, 11, dy, dx, 1); // waist
  fillBox(img, 4, 13, 4, 6, dy, dx, 1); // left leg
  fillBox(img, 4, 13, 9, 11, dy, dx, 1); // right leg
}

function renderPullover(img: Float32Array, dy: number, dx: number): void {
  fillBox(img, 3, 12, 4, 11, dy, dx, 1); // body
  fillBox(img, 1, 3, 6, 9, dy, dx, 1); // collar
  fillBox(img, 5, 11, 1, 3, dy, dx, 1); // left arm
  fillBox(img, 5, 11, 12, 14, dy, dx, 1); // right arm
}

function renderBag(img: Float32Array, dy: number, dx: number): void {
  // box outline
  fillBox(img, 6, 13, 3, 12, dy, dx, 1);
  fillBox(img, 8, 11, 5, 10, dy, dx, 0);
  // handle arch
  fillBox(img, 2, 3, 5, 10, dy, dx, 1);
  fillBox(img, 3, 6, 5, 6, dy, dx, 1);
  fillBox(img, 3, 6, 9, 10, dy, dx, 1);
}

const APPAREL = [renderTee, renderTrousers, renderPullover, renderBag];

export function renderApparel(kind: number, rng: Rng): Float32Array {
  const img = new Float32Array(PIXELS);
  const dy = rng.int(-1, 1);
  const dx = rng.int(-1, 1);
  APPAREL[kind % APPAREL.length](img, dy, dx);
  jitterAndNoise(img, rng);
  return img;
}

/** n digit glyphs with labels cycling through the classes */
export function digitCorpus(n: number, seed: number): Corpus {
  const rng = new Rng(seed);
  const images = new Float32Array(n * PIXELS);
  const labels = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    const digit = i % N_CLASSES;
    images.set(renderDigit(digit, rng), i * PIXELS);
    labels[i] = digit;
  }
  return { images, labels, n };
}

/** n apparel silhouettes, all labeled -1 */
export function apparelCorpus(n: number, seed: number): Corpus {
  const rng = new Rng(seed);
  const images = new Float32Array(n * PIXELS);
  const labels = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    images.set(renderApparel(i % APPAREL.length, rng), i * PIXELS);
    labels[i] = -1;
  }
  return { images, labels, n };
}
