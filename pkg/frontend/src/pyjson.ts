/**
 * Canonical JSON matching Python's json.dumps(sort_keys=True,
 * separators=(",", ":")) byte for byte, so containers packed here are
 * identical to containers packed by the Python side for the same data.
 *
 * JavaScript has one number type where Python has two, so integral
 * values encode as JSON integers ("7") by default; wrap a value in
 * PyFloat to force Python float formatting ("7.0").
 */

import { ShapeError } from "./errors.js";

/** Marks a number that must serialize as a Python float (e.g. "4.0"). */
export class PyFloat {
  constructor(public readonly value: number) {}
}

/**
 * Python repr() of a finite double: shortest round-trip digits, fixed
 * notation while the decimal point sits in (-4, 16], scientific with a
 * signed two-digit-minimum exponent outside that range.
 */
export function pyFloatRepr(x: number): string {
  if (!Number.isFinite(x)) {
    throw new ShapeError(`non-finite number is not valid JSON: ${x}`);
  }
  if (x === 0) return Object.is(x, -0) ? "-0.0" : "0.0";
  const neg = x < 0;
  // toExponential() without an argument yields the shortest digit string
  // that uniquely identifies the double, same as Python's dtoa
  const m = /^(\d)(?:\.(\d+))?e([+-]\d+)$/.exec(Math.abs(x).toExponential());
  if (!m) throw new ShapeError(`cannot format number ${x}`);
  const digits = m[1] + (m[2] ?? "");
  const decpt = parseInt(m[3], 10) + 1;
  let out: string;
  if (decpt > 16 || decpt <= -4) {
    const e = decpt - 1;
    const mant = digits.length > 1 ? digits[0] + "." + digits.slice(1) : digits;
    out = mant + "e" + (e < 0 ? "-" : "+") + String(Math.abs(e)).padStart(2, "0");
  } else if (decpt <= 0) {
    out = "0." + "0".repeat(-decpt) + digits;
  } else if (decpt >= digits.length) {
    out = digits + "0".repeat(decpt - digits.length) + ".0";
  } else {
    out = digits.slice(0, decpt) + "." + digits.slice(decpt);
  }
  return neg ? "-" + out : out;
}

const SHORT_ESCAPES: Record<string, string> = {
  '"': '\\"',
  "\\": "\\\\",
  "\b": "\\b",
  "\f": "\\f",
  "\n": "\\n",
  "\r": "\\r",
  "\t": "\\t",
};

function encodeString(s: string): string {
  let out = '"';
  for (let i = 0; i < s.length; i++) {
    const ch = s[i];
    const code = s.charCodeAt(i);
    if (SHORT_ESCAPES[ch] !== undefined) {
      out += SHORT_ESCAPES[ch];
    } else if (code < 0x20 || code > 0x7e) {
      // ensure_ascii behavior: everything outside printable ASCII becomes
      // \uxxxx; astral characters escape as their surrogate pair
      out += "\\u" + code.toString(16).padStart(4, "0");
    } else {
      out += ch;
    }
  }
  return out + '"';
}

/** Compare strings by Unicode code point, the way Python sorts keys. */
function cmpCodePoints(a: string, b: string): number {
  let i = 0;
  let j = 0;
  while (i < a.length && j < b.length) {
    const ca = a.codePointAt(i)!;
    const cb = b.codePointAt(j)!;
    if (ca !== cb) return ca - cb;
    i += ca > 0xffff ? 2 : 1;
    j += cb > 0xffff ? 2 : 1;
  }
  return a.length - i - (b.length - j);
}

export type JsonValue =
  | null
  | boolean
  | number
  | string
  | PyFloat
  | JsonValue[]
  | { [key: string]: JsonValue };

export function canonicalJson(value: JsonValue): string {
  if (value === null) return "null";
  if (value instanceof PyFloat) return pyFloatRepr(value.value);
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (Number.isInteger(value) && !Object.is(value, -0)) {
        if (Math.abs(value) > Number.MAX_SAFE_INTEGER) {
          throw new ShapeError(`integer too large to serialize exactly: ${value}`);
        }
        return String(value);
      }
      return pyFloatRepr(value);
    case "string":
      return encodeString(value);
    case "object": {
      if (Array.isArray(value)) {
        return "[" + value.map(canonicalJson).join(",") + "]";
      }
      const keys = Object.keys(value).sort(cmpCodePoints);
      const parts = keys.map(
        (k) => encodeString(k) + ":" + canonicalJson(value[k]),
      );
      return "{" + parts.join(",") + "}";
    }
    default:
      throw new ShapeError(`value is not JSON-serializable: ${String(value)}`);
  }
}
