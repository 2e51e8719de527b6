/**
 * Reader/writer for the flow4d binary tensor container.
 *
 * Layout: magic "F4R1" | u64le header length | canonical JSON header,
 * space-padded so the payload starts on a 64-byte file offset | tensors
 * as little-endian float32, each on a 64-byte payload offset | trailing
 * CRC-32 (LE) over every preceding byte.
 *
 * unpack() verifies the checksum before trusting any field and returns
 * zero-copy Float32Array views into the given bytes wherever alignment
 * allows; the views alias the input buffer, so copy before mutating.
 */

import { closeSync, openSync, readFileSync, renameSync, unlinkSync, writeSync } from "node:fs";
import { dirname, join } from "node:path";

import { crc32 } from "./crc32.js";
import { CorruptContainerError, ShapeError } from "./errors.js";
import { canonicalJson, type JsonValue } from "./pyjson.js";

export const MAGIC = "F4R1";
export const ALIGN = 64;
const PREFIX = 12; // magic + u64 header length

// float32 byte order in the file is little-endian; so is every platform
// node ships on, but fail loudly rather than corrupt data elsewhere
const HOST_IS_LE = new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

export interface Tensor {
  shape: readonly number[];
  data: Float32Array;
}

export type TensorInput = Tensor | Float32Array | number[] | number;

export interface Container {
  meta: Record<string, unknown>;
  tensors: Map<string, Tensor>;
}

function alignUp(n: number): number {
  return Math.ceil(n / ALIGN) * ALIGN;
}

function product(shape: readonly number[]): number {
  let n = 1;
  for (const s of shape) n *= s;
  return n;
}

export function asTensor(name: string, value: TensorInput): Tensor {
  if (typeof value === "number") {
    return { shape: [1], data: Float32Array.of(value) };
  }
  if (value instanceof Float32Array) {
    return { shape: [value.length], data: value };
  }
  if (Array.isArray(value)) {
    return { shape: [value.length], data: Float32Array.from(value) };
  }
  const count = product(value.shape);
  if (count !== value.data.length) {
    throw new ShapeError(
      `tensor '${name}': shape (${value.shape.join(", ")}) wants ${count} ` +
        `elements, data has ${value.data.length}`,
    );
  }
  return value;
}

/** Serialize tensors and meta to container bytes (layout in input order). */
export function pack(
  tensors: Record<string, TensorInput> | Map<string, TensorInput>,
  meta?: Record<string, JsonValue>,
): Uint8Array {
  if (!HOST_IS_LE) {
    throw new ShapeError("big-endian hosts are not supported");
  }
  const entries =
    tensors instanceof Map ? [...tensors.entries()] : Object.entries(tensors);
  if (entries.length === 0) {
    throw new ShapeError("container needs at least one tensor");
  }

  const specs: Record<string, JsonValue> = {};
  const placed: Array<{ offset: number; tensor: Tensor }> = [];
  let offset = 0;
  for (const [name, value] of entries) {
    if (typeof name !== "string" || name.length === 0) {
      throw new ShapeError(`tensor name must be a non-empty string`);
    }
    const tensor = asTensor(name, value);
    offset = alignUp(offset);
    specs[name] = {
      dtype: "f4",
      shape: [...tensor.shape],
      byte_offset: offset,
    };
    placed.push({ offset, tensor });
    offset += tensor.data.length * 4;
  }

  const header = new TextEncoder().encode(
    canonicalJson({ format_version: 1, meta: meta ?? {}, tensors: specs }),
  );
  const paddedLen = alignUp(PREFIX + header.length) - PREFIX;

  const total = PREFIX + paddedLen + offset + 4;
  const out = new Uint8Array(total);
  const view = new DataView(out.buffer);
  out.set(new TextEncoder().encode(MAGIC), 0);
  view.setBigUint64(4, BigInt(paddedLen), true);
  out.set(header, PREFIX);
  out.fill(0x20, PREFIX + header.length, PREFIX + paddedLen);

  const payloadStart = PREFIX + paddedLen;
  for (const { offset: off, tensor } of placed) {
    out.set(
      new Uint8Array(tensor.data.buffer, tensor.data.byteOffset, tensor.data.length * 4),
      payloadStart + off,
    );
  }
  view.setUint32(total - 4, crc32(out.subarray(0, total - 4)), true);
  return out;
}

/** Decode container bytes; throws CorruptContainerError on any problem. */
export function unpack(data: Uint8Array): Container {
  if (!HOST_IS_LE) {
    throw new ShapeError("big-endian hosts are not supported");
  }
  if (data.length < PREFIX + 4) {
    throw new CorruptContainerError(`file too short (${data.length} bytes)`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const stored = view.getUint32(data.length - 4, true);
  const actual = crc32(data.subarray(0, data.length - 4));
  if (stored !== actual) {
    throw new CorruptContainerError(
      `checksum mismatch (stored 0x${stored.toString(16).padStart(8, "0")}, ` +
        `computed 0x${actual.toString(16).padStart(8, "0")})`,
    );
  }
  if (new TextDecoder().decode(data.subarray(0, 4)) !== MAGIC) {
    throw new CorruptContainerError(`bad magic`);
  }
  const headerLenBig = view.getBigUint64(4, true);
  if (headerLenBig > BigInt(data.length)) {
    throw new CorruptContainerError("header length exceeds file size");
  }
  const headerLen = Number(headerLenBig);
  const payloadStart = PREFIX + headerLen;
  if (payloadStart + 4 > data.length) {
    throw new CorruptContainerError("header length exceeds file size");
  }

  let header: unknown;
  try {
    header = JSON.parse(
      new TextDecoder("utf-8", { fatal: true }).decode(
        data.subarray(PREFIX, payloadStart),
      ),
    );
  } catch (exc) {
    throw new CorruptContainerError(`bad header JSON: ${String(exc)}`);
  }
  if (
    typeof header !== "object" ||
    header === null ||
    Array.isArray(header) ||
    (header as Record<string, unknown>)["format_version"] !== 1
  ) {
    throw new CorruptContainerError("unsupported format version");
  }
  const specs = (header as Record<string, unknown>)["tensors"];
  if (typeof specs !== "object" || specs === null || Array.isArray(specs)) {
    throw new CorruptContainerError("header has no tensor table");
  }

  const payloadLen = data.length - 4 - payloadStart;
  const tensors = new Map<string, Tensor>();
  for (const [name, rawSpec] of Object.entries(specs as Record<string, unknown>)) {
    const spec = rawSpec as Record<string, unknown>;
    const dtype = spec?.["dtype"];
    const shape = spec?.["shape"];
    const off = spec?.["byte_offset"];
    if (dtype !== "f4") {
      throw new CorruptContainerError(
        `tensor '${name}': unsupported dtype ${JSON.stringify(dtype)}`,
      );
    }
    if (!Array.isArray(shape) || shape.some((s) => !Number.isInteger(s) || s < 0)) {
      throw new CorruptContainerError(`tensor '${name}': bad shape`);
    }
    const count = product(shape as number[]);
    const nbytes = 4 * count;
    if (
      typeof off !== "number" ||
      !Number.isInteger(off) ||
      off < 0 ||
      off % ALIGN !== 0 ||
      off + nbytes > payloadLen
    ) {
      throw new CorruptContainerError(
        `tensor '${name}': bytes [${off}, ${Number(off) + nbytes}) outside payload`,
      );
    }
    const absolute = data.byteOffset + payloadStart + off;
    const view32 =
      absolute % 4 === 0
        ? new Float32Array(data.buffer, absolute, count)
        : new Float32Array(
            data.buffer.slice(absolute, absolute + nbytes),
          );
    tensors.set(name, { shape: shape as number[], data: view32 });
  }

  const meta = (header as Record<string, unknown>)["meta"] ?? {};
  if (typeof meta !== "object" || meta === null || Array.isArray(meta)) {
    throw new CorruptContainerError("meta is not an object");
  }
  return { meta: meta as Record<string, unknown>, tensors };
}

export function readContainer(path: string): Container {
  return unpack(readFileSync(path));
}

/** Pack and write atomically (temp file alongside, then rename). */
export function writeContainer(
  path: string,
  tensors: Record<string, TensorInput> | Map<string, TensorInput>,
  meta?: Record<string, JsonValue>,
): void {
  const data = pack(tensors, meta);
  const tmp = join(
    dirname(path),
    `.f4r-${process.pid}-${Math.random().toString(36).slice(2)}.tmp`,
  );
  const fd = openSync(tmp, "w");
  let open = true;
  try {
    writeSync(fd, data);
    closeSync(fd);
    open = false;
    renameSync(tmp, path);
  } catch (exc) {
    if (open) {
      try {
        closeSync(fd);
      } catch {
        // already failing
      }
    }
    try {
      unlinkSync(tmp);
    } catch {
      // best effort
    }
    throw exc;
  }
}
