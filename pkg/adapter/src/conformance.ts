/**
 * Reader for the shared golden-vector file (conformance/golden_vectors.json
 * at the repository root) and the typed JSON value rendering it uses.
 */

import * as fs from "fs";

import { CompressedImage, NdArray, Value, ValueMap } from "./value";

export const FORMAT_NAME = "policyserve-golden-vectors";
export const FORMAT_VERSION = 1;

export interface ValueVector {
  name: string;
  encoded_hex: string;
  value: TypedJson;
}

export interface FrameVector {
  name: string;
  frame_hex: string;
  msg_type: number;
  flags: number;
  request_id: number;
  payload_hex: string;
}

export interface VectorFile {
  format: string;
  version: number;
  value_vectors: ValueVector[];
  frame_vectors: FrameVector[];
}

export type TypedJson =
  | { t: "null" }
  | { t: "bool"; v: boolean }
  | { t: "int"; v: string }
  | { t: "real"; bits: string }
  | { t: "string"; v: string }
  | { t: "bytes"; hex: string }
  | { t: "list"; items: TypedJson[] }
  | { t: "map"; entries: Array<[string, TypedJson]> }
  | { t: "array"; kind: "u8" | "i64" | "f32" | "f64"; shape: number[]; data_hex: string }
  | { t: "image"; codec: "jpeg" | "png"; data_hex: string };

export function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.substring(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function jsonableToValue(doc: TypedJson): Value {
  switch (doc.t) {
    case "null":
      return null;
    case "bool":
      return doc.v;
    case "int":
      return BigInt(doc.v);
    case "real": {
      const raw = hexToBytes(doc.bits);
      return new DataView(raw.buffer).getFloat64(0, true);
    }
    case "string":
      return doc.v;
    case "bytes":
      return hexToBytes(doc.hex);
    case "list":
      return doc.items.map(jsonableToValue);
    case "map": {
      const map: ValueMap = new Map();
      for (const [key, item] of doc.entries) map.set(key, jsonableToValue(item));
      return map;
    }
    case "array":
      return new NdArray(doc.kind, doc.shape, hexToBytes(doc.data_hex));
    case "image":
      return new CompressedImage(doc.codec, hexToBytes(doc.data_hex));
  }
}

export function loadVectors(path: string): VectorFile {
  const doc = JSON.parse(fs.readFileSync(path, "utf-8")) as VectorFile;
  if (doc.format !== FORMAT_NAME || doc.version !== FORMAT_VERSION) {
    throw new Error(`${path} is not a version-${FORMAT_VERSION} ${FORMAT_NAME} file`);
  }
  return doc;
}
