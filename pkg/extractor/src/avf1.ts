/**
 * AVF1 feature container, little endian throughout:
 *
 *   bytes 0..3    magic "AVF1"
 *   bytes 4..7    u32 version (1)
 *   bytes 8..15   u64 row count N
 *   bytes 16..19  u32 feature width H
 *   bytes 20..23  u32 class count C
 *   then N*H float32 features, row major
 *   then N int32 labels (-1 for unlabeled rows)
 */
import * as fs from "node:fs";

export const MAGIC = "AVF1";
export const VERSION = 1;
export const HEADER_BYTES = 24;

export interface FeatureFile {
  features: Float32Array; // n x h, row major
  labels: Int32Array;
  n: number;
  h: number;
  nClasses: number;
}

export function encodeAvf1(f: FeatureFile): Buffer {
  if (f.features.length !== f.n * f.h) {
    throw new Error(`feature buffer is ${f.features.length}, expected ${f.n * f.h}`);
  }
  if (f.labels.length !== f.n) {
    throw new Error(`label buffer is ${f.labels.length}, expected ${f.n}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + f.n * f.h * 4 + f.n * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeBigUInt64LE(BigInt(f.n), 8);
  buf.writeUInt32LE(f.h, 16);
  buf.writeUInt32LE(f.nClasses, 20);
  let off = HEADER_BYTES;
  for (let i = 0; i < f.features.length; i++, off += 4) {
    buf.writeFloatLE(f.features[i], off);
  }
  for (let i = 0; i < f.n; i++, off += 4) {
    buf.writeInt32LE(f.labels[i], off);
  }
  return buf;
}

export function writeAvf1(path: string, f: FeatureFile): void {
  fs.writeFileSync(path, encodeAvf1(f));
}

export function readAvf1(path: string): FeatureFile {
  const buf = fs.readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: shorter than the 24 byte header`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`${path}: unsupported version ${version}`);
  }
  const n = Number(buf.readBigUInt64LE(8));
  const h = buf.readUInt32LE(16);
  const nClasses = buf.readUInt32LE(20);
  const expect = HEADER_BYTES + n * h * 4 + n * 4;
  if (buf.length !== expect) {
    throw new Error(`${path}: payload is ${buf.length} bytes, header implies ${expect}`);
  }
  const features = new Float32Array(n * h);
  let off = HEADER_BYTES;
  for (let i = 0; i < features.length; i++, off += 4) {
    features[i] = buf.readFloatLE(off);
  }
  const labels = new Int32Array(n);
  for (let i = 0; i < n; i++, off += 4) {
    labels[i] = buf.readInt32LE(off);
  }
  return { features, labels, n, h, nClasses };
}
