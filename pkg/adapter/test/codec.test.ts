/** Local codec properties: round trips, canonical map order, CRC, errors. */

import { describe, expect, it } from "vitest";

import {
  FrameTooLarge,
  IntegrityError,
  MsgType,
  ProtocolError,
  crc32,
  decodeFrame,
  encodeFrame,
  frame,
} from "../src/frame";
import {
  CompressedImage,
  DecodingError,
  EncodingError,
  NdArray,
  Value,
  decodeValue,
  encodeValue,
  valuesEqual,
  vmap,
} from "../src/value";

// deterministic xorshift generator, good enough for structured fuzz
function rng(seed: number) {
  let s = seed >>> 0 || 1;
  return () => {
    s ^= s << 13; s >>>= 0;
    s ^= s >> 17;
    s ^= s << 5; s >>>= 0;
    return s / 0xffffffff;
  };
}

function randomBytes(next: () => number, n: number): Uint8Array {
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.floor(next() * 256);
  return out;
}

function randomValue(next: () => number, depth = 0): Value {
  const kinds = depth >= 3 ? 8 : 10;
  switch (Math.floor(next() * kinds)) {
    case 0: return null;
    case 1: return next() < 0.5;
    case 2: {
      const picks = [0n, 5n, -1n, 2n ** 63n - 1n, -(2n ** 63n),
                     BigInt(Math.floor(next() * 1e15))];
      return picks[Math.floor(next() * picks.length)];
    }
    case 3: {
      const picks = [0, -0, 1.5, Infinity, -Infinity, NaN, Math.PI, next() * 1e9];
      return picks[Math.floor(next() * picks.length)];
    }
    case 4: {
      const base = `str-${Math.floor(next() * 1e6)}-é🤖`;
      return Array.from(base).slice(0, Math.floor(next() * 16)).join("");
    }
    case 5: return randomBytes(next, Math.floor(next() * 20));
    case 6: {
      const kind = (["u8", "i64", "f32", "f64"] as const)[Math.floor(next() * 4)];
      const itemsize = { u8: 1, i64: 8, f32: 4, f64: 8 }[kind];
      const shape = [1 + Math.floor(next() * 3), Math.floor(next() * 4)];
      const count = shape.reduce((a, b) => a * b, 1);
      return new NdArray(kind, shape, randomBytes(next, count * itemsize));
    }
    case 7:
      return new CompressedImage(next() < 0.5 ? "jpeg" : "png",
                                 randomBytes(next, 1 + Math.floor(next() * 24)));
    case 8: {
      const out: Value[] = [];
      const n = Math.floor(next() * 4);
      for (let i = 0; i < n; i++) out.push(randomValue(next, depth + 1));
      return out;
    }
    default: {
      const out = new Map<string, Value>();
      const n = Math.floor(next() * 4);
      for (let i = 0; i < n; i++) {
        out.set(`k${Math.floor(next() * 100)}`, randomValue(next, depth + 1));
      }
      return out;
    }
  }
}

describe("value codec", () => {
  it("round-trips 500 random values with canonical re-encoding", () => {
    const next = rng(20240601);
    for (let i = 0; i < 500; i++) {
      const v = randomValue(next);
      const blob = encodeValue(v);
      const [out, consumed] = decodeValue(blob);
      expect(consumed).toBe(blob.length);
      expect(valuesEqual(v, out)).toBe(true);
      expect(encodeValue(out)).toEqual(blob);
    }
  });

  it("encodes maps in sorted key-octet order regardless of insertion", () => {
    const a = encodeValue(vmap([["zeta", 1n], ["alpha", 2n]]));
    const b = encodeValue(vmap([["alpha", 2n], ["zeta", 1n]]));
    expect(a).toEqual(b);
  });

  it("fixed encodings", () => {
    expect(encodeValue(null)).toEqual(new Uint8Array([0x00]));
    expect(encodeValue(5n)).toEqual(new Uint8Array([0x02, 5, 0, 0, 0, 0, 0, 0, 0]));
    expect(encodeValue(true)).toEqual(new Uint8Array([0x01, 0x01]));
  });

  it("rejects bad bool payloads with position", () => {
    expect(() => decodeValue(new Uint8Array([0x01, 0x02]))).toThrow(DecodingError);
  });

  it("rejects truncation", () => {
    const blob = encodeValue("hello world");
    expect(() => decodeValue(blob.slice(0, blob.length - 3))).toThrow(DecodingError);
  });

  it("rejects duplicate map keys", () => {
    const entry = new Uint8Array([1, 0, 0, 0, 0x61, 0x00]); // "a" -> null
    const blob = new Uint8Array([0x07, 2, 0, 0, 0, ...entry, ...entry]);
    expect(() => decodeValue(blob)).toThrow(DecodingError);
  });

  it("rejects out-of-range ints", () => {
    expect(() => encodeValue(2n ** 63n)).toThrow(EncodingError);
  });
});

describe("frame codec", () => {
  it("crc check value and empty crc", () => {
    expect(crc32(new TextEncoder().encode("123456789"))).toBe(0xcbf43926);
    expect(crc32(new Uint8Array(0))).toBe(0);
  });

  it("round-trips random frames", () => {
    const next = rng(777);
    const types = [MsgType.HELLO, MsgType.ACT, MsgType.ACT_ACK, MsgType.ERROR,
                   MsgType.PING, MsgType.CLOSE];
    for (let i = 0; i < 200; i++) {
      const f = frame(types[Math.floor(next() * types.length)],
                      BigInt(Math.floor(next() * 1e15)),
                      randomBytes(next, Math.floor(next() * 100)),
                      Math.floor(next() * 4));
      const out = decodeFrame(encodeFrame(f));
      expect(out.msgType).toBe(f.msgType);
      expect(out.requestId).toBe(f.requestId);
      expect(out.flags).toBe(f.flags);
      expect(out.payload).toEqual(f.payload);
    }
  });

  it("detects single-bit payload corruption", () => {
    const next = rng(4321);
    const payload = randomBytes(next, 64);
    const raw = encodeFrame(frame(MsgType.ACT, 3n, payload));
    for (let i = 0; i < 100; i++) {
      const bit = Math.floor(next() * payload.length * 8);
      const corrupted = raw.slice();
      corrupted[20 + (bit >> 3)] ^= 1 << (bit & 7);
      expect(() => decodeFrame(corrupted)).toThrow(IntegrityError);
    }
  });

  it("rejects bad magic, version, oversize", () => {
    const raw = encodeFrame(frame(MsgType.PING, 1n));
    const badMagic = raw.slice();
    badMagic[0] = 0x58;
    expect(() => decodeFrame(badMagic)).toThrow(ProtocolError);
    const badVersion = raw.slice();
    badVersion[4] = 9;
    expect(() => decodeFrame(badVersion)).toThrow(ProtocolError);
    expect(() => encodeFrame(frame(MsgType.ACT, 1n, new Uint8Array(100)), 64))
      .toThrow(FrameTooLarge);
  });
});
