import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { Tensor } from "../src/container.js";

export const FIXTURES_DIR = join(
  dirname(fileURLToPath(import.meta.url)),
  ".fixtures",
);

export interface Manifest {
  seeds: number;
  hw: [number, number];
  dec_tensor_sha256: Record<string, string>[];
}

export function readManifest(): Manifest {
  return JSON.parse(readFileSync(join(FIXTURES_DIR, "manifest.json"), "utf8"));
}

export function fixture(name: string): string {
  return join(FIXTURES_DIR, name);
}

export function sha256(bytes: Uint8Array): string {
  return createHash("sha256").update(bytes).digest("hex");
}

export function bytesOf(data: Float32Array): Uint8Array {
  return new Uint8Array(data.buffer, data.byteOffset, data.byteLength);
}

export function tensorBytes(t: Tensor): Uint8Array {
  return bytesOf(t.data);
}

export function asBuffer(bytes: Uint8Array): Buffer {
  return Buffer.from(bytes.buffer, bytes.byteOffset, bytes.byteLength);
}

export function concat2(a: Float32Array, b: Float32Array): Float32Array {
  const out = new Float32Array(a.length + b.length);
  out.set(a, 0);
  out.set(b, a.length);
  return out;
}
