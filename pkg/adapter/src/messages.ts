/**
 * Observation/action records and their value-map encodings, mirroring the
 * primary implementation: observations decode with camera images
 * transparently decompressed to u8 HxWx3 arrays; actions are plain maps
 * {action, done, info} and are never compressed.
 */

import * as jpeg from "jpeg-js";

import {
  CompressedImage,
  DecodingError,
  EncodingError,
  NdArray,
  Value,
  ValueMap,
  vmap,
} from "./value";

export interface Obs {
  cameras: Map<string, NdArray>;
  gripper: number | NdArray | null;
  info: ValueMap;
  batched: boolean;
}

export interface Act {
  action: NdArray;
  done: boolean;
  info: ValueMap;
}

/** Decode JPEG octets to a u8 HxWx3 RGB array (PNG is not produced by the
 * primary's compression policy and is rejected here). */
export function decompressImage(img: CompressedImage): NdArray {
  if (img.codec !== "jpeg") {
    throw new DecodingError(`unsupported image codec ${img.codec} in this host`);
  }
  let decoded: { width: number; height: number; data: Uint8Array };
  try {
    decoded = jpeg.decode(Buffer.from(img.data), { useTArray: true, formatAsRGBA: true });
  } catch (e) {
    throw new DecodingError(`corrupt jpeg stream: ${(e as Error).message}`);
  }
  const { width, height, data } = decoded;
  const rgb = new Uint8Array(width * height * 3);
  for (let p = 0, q = 0; q < rgb.length; p += 4, q += 3) {
    rgb[q] = data[p];
    rgb[q + 1] = data[p + 1];
    rgb[q + 2] = data[p + 2];
  }
  return new NdArray("u8", [height, width, 3], rgb);
}

function checkCameraShape(name: string, cam: NdArray, batched: boolean) {
  const rank = batched ? 4 : 3;
  if (cam.kind !== "u8" || cam.shape.length !== rank || cam.shape[rank - 1] !== 3) {
    throw new DecodingError(
      `camera ${JSON.stringify(name)} must be u8 ${batched ? "BxHxWx3" : "HxWx3"}, ` +
      `got ${cam.kind} [${cam.shape}]`);
  }
}

/** Rebuild an Obs from its value map, decompressing any images. */
export function decodeObs(value: Value, batched?: boolean): Obs {
  if (!(value instanceof Map)) {
    throw new DecodingError("encoded observation must be a map");
  }
  const rawCams = value.get("cameras") ?? new Map();
  if (!(rawCams instanceof Map)) {
    throw new DecodingError("observation 'cameras' must be a map");
  }
  const cameras = new Map<string, NdArray>();
  for (const [name, cam] of rawCams) {
    if (cam instanceof CompressedImage) {
      cameras.set(name, decompressImage(cam));
    } else if (cam instanceof NdArray) {
      cameras.set(name, cam);
    } else {
      throw new DecodingError(`camera ${JSON.stringify(name)} is neither an array nor an image`);
    }
  }
  const gripper = value.get("gripper") ?? null;
  if (gripper !== null && typeof gripper !== "number" && !(gripper instanceof NdArray)) {
    throw new DecodingError("observation 'gripper' must be real, array or null");
  }
  const info = value.get("info") ?? new Map();
  if (!(info instanceof Map)) {
    throw new DecodingError("observation 'info' must be a map");
  }
  let isBatched = batched;
  if (isBatched === undefined) {
    isBatched = gripper instanceof NdArray;
    for (const cam of cameras.values()) {
      if (cam.shape.length === 4) isBatched = true;
    }
  }
  for (const [name, cam] of cameras) checkCameraShape(name, cam, isBatched);
  return { cameras, gripper, info, batched: isBatched };
}

/** Batch size of a batched observation (undefined when indeterminate). */
export function obsBatchSize(obs: Obs): number | undefined {
  if (!obs.batched) return undefined;
  for (const cam of obs.cameras.values()) return cam.shape[0];
  if (obs.gripper instanceof NdArray) return obs.gripper.shape[0];
  return undefined;
}

/** Render an Act as a value map. */
export function encodeAct(act: Act, batched: boolean): ValueMap {
  const rank = batched ? 2 : 1;
  if (act.action.kind !== "f32" && act.action.kind !== "f64") {
    throw new EncodingError(`action dtype must be f32 or f64, got ${act.action.kind}`);
  }
  if (act.action.shape.length !== rank) {
    throw new EncodingError(
      `action must be ${batched ? "BxD" : "D"}, got shape [${act.action.shape}]`);
  }
  return vmap({ action: act.action, done: act.done, info: act.info });
}

/** Zero-filled f32 action vector helper for the built-in agents. */
export function zerosF32(shape: number[]): NdArray {
  const count = shape.reduce((a, b) => a * b, 1);
  return new NdArray("f32", shape, new Uint8Array(count * 4));
}
