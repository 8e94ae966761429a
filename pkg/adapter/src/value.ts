/**
 * Self-describing binary value encoding, wire-compatible with the Python
 * implementation (see ../../conformance/golden_vectors.json for the
 * cross-implementation contract).
 *
 * Kinds: null | bool | int (bigint, signed 64-bit) | real (number, IEEE-754
 * double) | string | bytes (Uint8Array) | list | map (string keys, encoded
 * in ascending key-octet order) | dense numeric array | compressed image.
 * All integers little-endian. Encoding is canonical: decode followed by
 * encode reproduces identical octets.
 */

export const TAG_NULL = 0x00;
export const TAG_BOOL = 0x01;
export const TAG_INT = 0x02;
export const TAG_REAL = 0x03;
export const TAG_STRING = 0x04;
export const TAG_BYTES = 0x05;
export const TAG_LIST = 0x06;
export const TAG_MAP = 0x07;
export const TAG_ARRAY = 0x08;
export const TAG_IMAGE = 0x09;

export const MAX_ARRAY_DIMS = 8;
export const INT64_MIN = -(2n ** 63n);
export const INT64_MAX = 2n ** 63n - 1n;

export type ArrayKind = "u8" | "i64" | "f32" | "f64";

const KIND_CODES: Record<ArrayKind, number> = { u8: 0, i64: 1, f32: 2, f64: 3 };
const CODE_KINDS: ArrayKind[] = ["u8", "i64", "f32", "f64"];
const KIND_ITEMSIZE: Record<ArrayKind, number> = { u8: 1, i64: 8, f32: 4, f64: 8 };

const CODEC_CODES: Record<string, number> = { jpeg: 0, png: 1 };
const CODE_CODECS = ["jpeg", "png"] as const;

/** Dense numeric array: raw little-endian row-major octets plus shape. */
export class NdArray {
  constructor(
    public readonly kind: ArrayKind,
    public readonly shape: number[],
    public readonly data: Uint8Array,
  ) {
    if (shape.length < 1 || shape.length > MAX_ARRAY_DIMS) {
      throw new EncodingError(`array must have 1-${MAX_ARRAY_DIMS} dims, got ${shape.length}`);
    }
    const count = shape.reduce((a, b) => a * b, 1);
    if (count * KIND_ITEMSIZE[kind] !== data.length) {
      throw new EncodingError(
        `array data length ${data.length} does not match shape [${shape}] of ${kind}`);
    }
  }

  get elementCount(): number {
    return this.shape.reduce((a, b) => a * b, 1);
  }
}

/** Compressed raster whose octets decode to a u8 HxWx3 image. */
export class CompressedImage {
  constructor(public readonly codec: "jpeg" | "png", public readonly data: Uint8Array) {}
}

export type ValueMap = Map<string, Value>;

export type Value =
  | null
  | boolean
  | bigint
  | number
  | string
  | Uint8Array
  | Value[]
  | ValueMap
  | NdArray
  | CompressedImage;

export class EncodingError extends Error {}

export class DecodingError extends Error {
  constructor(message: string, public readonly offset?: number) {
    super(offset === undefined ? message : `${message} (at offset ${offset})`);
  }
}

const utf8Encoder = new TextEncoder();
const utf8Decoder = new TextDecoder("utf-8", { fatal: true });

function compareBytes(a: Uint8Array, b: Uint8Array): number {
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    if (a[i] !== b[i]) return a[i] - b[i];
  }
  return a.length - b.length;
}

function encodeUtf8Strict(s: string, what: string): Uint8Array {
  // TextEncoder silently replaces lone surrogates; the wire format requires
  // valid unicode, so reject them like the peer implementation does
  if (!(s as any).isWellFormed()) {
    throw new EncodingError(`${what} is not valid unicode`);
  }
  return utf8Encoder.encode(s);
}

function sortedMapEntries(map: ValueMap): Array<[Uint8Array, Value]> {
  const entries: Array<[Uint8Array, Value]> = [];
  for (const [key, item] of map) {
    entries.push([encodeUtf8Strict(key, "map key"), item]);
  }
  entries.sort((x, y) => compareBytes(x[0], y[0]));
  return entries;
}

class ByteWriter {
  private buf = new Uint8Array(256);
  private view = new DataView(this.buf.buffer);
  length = 0;

  private grow(extra: number) {
    if (this.length + extra <= this.buf.length) return;
    let size = this.buf.length * 2;
    while (size < this.length + extra) size *= 2;
    const next = new Uint8Array(size);
    next.set(this.buf.subarray(0, this.length));
    this.buf = next;
    this.view = new DataView(next.buffer);
  }

  u8(v: number) {
    this.grow(1);
    this.buf[this.length++] = v;
  }

  u16(v: number) {
    this.grow(2);
    this.view.setUint16(this.length, v, true);
    this.length += 2;
  }

  u32(v: number) {
    this.grow(4);
    this.view.setUint32(this.length, v, true);
    this.length += 4;
  }

  u64(v: bigint) {
    this.grow(8);
    this.view.setBigUint64(this.length, v, true);
    this.length += 8;
  }

  i64(v: bigint) {
    this.grow(8);
    this.view.setBigInt64(this.length, v, true);
    this.length += 8;
  }

  f64(v: number) {
    this.grow(8);
    this.view.setFloat64(this.length, v, true);
    this.length += 8;
  }

  bytes(v: Uint8Array) {
    this.grow(v.length);
    this.buf.set(v, this.length);
    this.length += v.length;
  }

  finish(): Uint8Array {
    return this.buf.slice(0, this.length);
  }
}

function writeValue(out: ByteWriter, v: Value): void {
  if (v === null) {
    out.u8(TAG_NULL);
    return;
  }
  if (typeof v === "boolean") {
    out.u8(TAG_BOOL);
    out.u8(v ? 1 : 0);
    return;
  }
  if (typeof v === "bigint") {
    if (v < INT64_MIN || v > INT64_MAX) {
      throw new EncodingError(`int ${v} does not fit in signed 64 bits`);
    }
    out.u8(TAG_INT);
    out.i64(v);
    return;
  }
  if (typeof v === "number") {
    out.u8(TAG_REAL);
    out.f64(v);
    return;
  }
  if (typeof v === "string") {
    const encoded = encodeUtf8Strict(v, "string");
    out.u8(TAG_STRING);
    out.u32(encoded.length);
    out.bytes(encoded);
    return;
  }
  if (v instanceof Uint8Array) {
    out.u8(TAG_BYTES);
    out.u32(v.length);
    out.bytes(v);
    return;
  }
  if (Array.isArray(v)) {
    out.u8(TAG_LIST);
    out.u32(v.length);
    for (const item of v) writeValue(out, item);
    return;
  }
  if (v instanceof Map) {
    const entries = sortedMapEntries(v);
    out.u8(TAG_MAP);
    out.u32(entries.length);
    for (const [key, item] of entries) {
      out.u32(key.length);
      out.bytes(key);
      writeValue(out, item);
    }
    return;
  }
  if (v instanceof NdArray) {
    out.u8(TAG_ARRAY);
    out.u8(KIND_CODES[v.kind]);
    out.u8(v.shape.length);
    for (const dim of v.shape) out.u32(dim);
    out.bytes(v.data);
    return;
  }
  if (v instanceof CompressedImage) {
    out.u8(TAG_IMAGE);
    out.u8(CODEC_CODES[v.codec]);
    out.u32(v.data.length);
    out.bytes(v.data);
    return;
  }
  throw new EncodingError(`cannot encode value of type ${typeof v}`);
}

/** Encode one value to its canonical octets. */
export function encodeValue(v: Value): Uint8Array {
  const out = new ByteWriter();
  writeValue(out, v);
  return out.finish();
}

class ByteReader {
  private view: DataView;

  constructor(private buf: Uint8Array, public offset = 0) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  private need(n: number, what: string) {
    if (this.offset + n > this.buf.length) {
      throw new DecodingError(`truncated input: need ${n} octets for ${what}`, this.offset);
    }
  }

  u8(what: string): number {
    this.need(1, what);
    return this.buf[this.offset++];
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.view.getUint32(this.offset, true);
    this.offset += 4;
    return v;
  }

  i64(what: string): bigint {
    this.need(8, what);
    const v = this.view.getBigInt64(this.offset, true);
    this.offset += 8;
    return v;
  }

  f64(what: string): number {
    this.need(8, what);
    const v = this.view.getFloat64(this.offset, true);
    this.offset += 8;
    return v;
  }

  bytes(n: number, what: string): Uint8Array {
    this.need(n, what);
    const v = this.buf.slice(this.offset, this.offset + n);
    this.offset += n;
    return v;
  }

  utf8(n: number, what: string): string {
    const raw = this.bytes(n, what);
    try {
      return utf8Decoder.decode(raw);
    } catch {
      throw new DecodingError(`invalid UTF-8 in ${what}`, this.offset - n);
    }
  }
}

function readValue(r: ByteReader): Value {
  const start = r.offset;
  const tag = r.u8("tag");
  switch (tag) {
    case TAG_NULL:
      return null;
    case TAG_BOOL: {
      const b = r.u8("bool");
      if (b !== 0 && b !== 1) {
        throw new DecodingError(`bool payload must be 0 or 1, got ${b}`, r.offset - 1);
      }
      return b === 1;
    }
    case TAG_INT:
      return r.i64("int");
    case TAG_REAL:
      return r.f64("real");
    case TAG_STRING: {
      const n = r.u32("string length");
      return r.utf8(n, "string data");
    }
    case TAG_BYTES: {
      const n = r.u32("bytes length");
      return r.bytes(n, "bytes data");
    }
    case TAG_LIST: {
      const count = r.u32("list count");
      const items: Value[] = [];
      for (let i = 0; i < count; i++) items.push(readValue(r));
      return items;
    }
    case TAG_MAP: {
      const count = r.u32("map count");
      const map: ValueMap = new Map();
      for (let i = 0; i < count; i++) {
        const klen = r.u32("map key length");
        const key = r.utf8(klen, "map key");
        if (map.has(key)) {
          throw new DecodingError(`duplicate map key ${JSON.stringify(key)}`, r.offset);
        }
        map.set(key, readValue(r));
      }
      return map;
    }
    case TAG_ARRAY: {
      const kindCode = r.u8("array kind");
      const kind = CODE_KINDS[kindCode];
      if (kind === undefined) {
        throw new DecodingError(`unknown array element kind ${kindCode}`, r.offset - 1);
      }
      const ndim = r.u8("array ndim");
      if (ndim < 1 || ndim > MAX_ARRAY_DIMS) {
        throw new DecodingError(`array ndim must be 1-${MAX_ARRAY_DIMS}, got ${ndim}`, r.offset - 1);
      }
      const shape: number[] = [];
      for (let i = 0; i < ndim; i++) shape.push(r.u32("array dim"));
      const count = shape.reduce((a, b) => a * b, 1);
      const data = r.bytes(count * KIND_ITEMSIZE[kind], "array data");
      return new NdArray(kind, shape, data);
    }
    case TAG_IMAGE: {
      const codecCode = r.u8("image codec");
      const codec = CODE_CODECS[codecCode];
      if (codec === undefined) {
        throw new DecodingError(`unknown image codec ${codecCode}`, r.offset - 1);
      }
      const n = r.u32("image length");
      return new CompressedImage(codec, r.bytes(n, "image data"));
    }
    default:
      throw new DecodingError(`unknown tag 0x${tag.toString(16).padStart(2, "0")}`, start);
  }
}

/** Decode one value; returns the value and the octets consumed. */
export function decodeValue(data: Uint8Array, offset = 0): [Value, number] {
  const r = new ByteReader(data, offset);
  const v = readValue(r);
  return [v, r.offset - offset];
}

/** Structural equality; NaN reals compare equal as a class (the wire format
 * is exercised byte-exactly by the golden vectors, so bit-level NaN payload
 * comparison is not needed here). */
export function valuesEqual(a: Value, b: Value): boolean {
  if (a === null || b === null) return a === b;
  if (typeof a === "boolean" || typeof b === "boolean") return a === b;
  if (typeof a === "bigint" && typeof b === "bigint") return a === b;
  if (typeof a === "number" && typeof b === "number") {
    return (Number.isNaN(a) && Number.isNaN(b)) || a === b;
  }
  if (typeof a === "string" || typeof b === "string") return a === b;
  if (a instanceof Uint8Array && b instanceof Uint8Array) {
    return compareBytes(a, b) === 0;
  }
  if (Array.isArray(a) && Array.isArray(b)) {
    return a.length === b.length && a.every((x, i) => valuesEqual(x, b[i]));
  }
  if (a instanceof Map && b instanceof Map) {
    if (a.size !== b.size) return false;
    for (const [k, v] of a) {
      if (!b.has(k) || !valuesEqual(v, b.get(k)!)) return false;
    }
    return true;
  }
  if (a instanceof NdArray && b instanceof NdArray) {
    return (
      a.kind === b.kind &&
      a.shape.length === b.shape.length &&
      a.shape.every((d, i) => d === b.shape[i]) &&
      compareBytes(a.data, b.data) === 0
    );
  }
  if (a instanceof CompressedImage && b instanceof CompressedImage) {
    return a.codec === b.codec && compareBytes(a.data, b.data) === 0;
  }
  return false;
}

/** Convenience builder for string-keyed maps. */
export function vmap(entries: Record<string, Value> | Array<[string, Value]>): ValueMap {
  return new Map(Array.isArray(entries) ? entries : Object.entries(entries));
}
