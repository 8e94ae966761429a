/**
 * Frame codec for the stream transport: 20-octet header (magic "VLAG",
 * version, message type, flags, request id, payload length), payload,
 * CRC-32/ISO-HDLC trailer over the payload. Little-endian throughout.
 */

export const MAGIC = new Uint8Array([0x56, 0x4c, 0x41, 0x47]); // "VLAG"
export const VERSION = 1;
export const HEADER_SIZE = 20;
export const TRAILER_SIZE = 4;
export const DEFAULT_MAX_PAYLOAD = 64 * 1024 * 1024;

export const FLAG_BATCHED = 0x0001;
export const FLAG_COMPRESSED_IMAGES = 0x0002;
const KNOWN_FLAGS = FLAG_BATCHED | FLAG_COMPRESSED_IMAGES;

export enum MsgType {
  HELLO = 0x01,
  HELLO_ACK = 0x02,
  INITIALIZE = 0x03,
  INITIALIZE_ACK = 0x04,
  RESET = 0x05,
  RESET_ACK = 0x06,
  ACT = 0x07,
  ACT_ACK = 0x08,
  CLOSE = 0x09,
  ERROR = 0x0a,
  PING = 0x0b,
  PING_ACK = 0x0c,
}

export class ProtocolError extends Error {}
export class IntegrityError extends Error {
  requestId?: bigint;
}
export class FrameTooLarge extends Error {}

// CRC-32/ISO-HDLC (reflected 0xEDB88320, init/xorout 0xFFFFFFFF);
// check value of "123456789" is 0xCBF43926.
const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[i] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = CRC_TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export interface Frame {
  msgType: MsgType;
  requestId: bigint;
  payload: Uint8Array;
  flags: number;
}

export function frame(msgType: MsgType, requestId: bigint | number,
                      payload: Uint8Array = new Uint8Array(0), flags = 0): Frame {
  return { msgType, requestId: BigInt(requestId), payload, flags };
}

function checkFields(msgType: number, flags: number, payloadLen: number, maxPayload: number) {
  if (!(msgType in MsgType)) {
    throw new ProtocolError(`unknown message type 0x${msgType.toString(16)}`);
  }
  if (flags & ~KNOWN_FLAGS) {
    throw new ProtocolError(`reserved flag bits set: 0x${flags.toString(16)}`);
  }
  if (payloadLen > maxPayload) {
    throw new FrameTooLarge(`payload of ${payloadLen} octets exceeds limit ${maxPayload}`);
  }
}

export function encodeFrame(f: Frame, maxPayload = DEFAULT_MAX_PAYLOAD): Uint8Array {
  checkFields(f.msgType, f.flags, f.payload.length, maxPayload);
  const out = new Uint8Array(HEADER_SIZE + f.payload.length + TRAILER_SIZE);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  out[4] = VERSION;
  out[5] = f.msgType;
  view.setUint16(6, f.flags, true);
  view.setBigUint64(8, f.requestId, true);
  view.setUint32(16, f.payload.length, true);
  out.set(f.payload, HEADER_SIZE);
  view.setUint32(HEADER_SIZE + f.payload.length, crc32(f.payload), true);
  return out;
}

export interface FrameHeader {
  msgType: MsgType;
  flags: number;
  requestId: bigint;
  payloadLen: number;
}

export function decodeHeader(header: Uint8Array, maxPayload = DEFAULT_MAX_PAYLOAD): FrameHeader {
  if (header.length !== HEADER_SIZE) {
    throw new ProtocolError(`header must be ${HEADER_SIZE} octets, got ${header.length}`);
  }
  for (let i = 0; i < 4; i++) {
    if (header[i] !== MAGIC[i]) throw new ProtocolError("bad magic");
  }
  if (header[4] !== VERSION) {
    throw new ProtocolError(`unsupported protocol version ${header[4]}`);
  }
  const view = new DataView(header.buffer, header.byteOffset, header.byteLength);
  const msgType = header[5];
  const flags = view.getUint16(6, true);
  const requestId = view.getBigUint64(8, true);
  const payloadLen = view.getUint32(16, true);
  checkFields(msgType, flags, payloadLen, maxPayload);
  return { msgType, flags, requestId, payloadLen };
}

export function decodeFrame(data: Uint8Array, maxPayload = DEFAULT_MAX_PAYLOAD): Frame {
  if (data.length < HEADER_SIZE + TRAILER_SIZE) {
    throw new ProtocolError(`frame of ${data.length} octets is shorter than the minimum`);
  }
  const head = decodeHeader(data.slice(0, HEADER_SIZE), maxPayload);
  const total = HEADER_SIZE + head.payloadLen + TRAILER_SIZE;
  if (data.length !== total) {
    throw new ProtocolError(`frame length ${data.length} does not match header (${total})`);
  }
  const payload = data.slice(HEADER_SIZE, HEADER_SIZE + head.payloadLen);
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const stated = view.getUint32(HEADER_SIZE + head.payloadLen, true);
  const actual = crc32(payload);
  if (stated !== actual) {
    const err = new IntegrityError(
      `payload checksum mismatch: stated 0x${stated.toString(16)}, computed 0x${actual.toString(16)}`);
    err.requestId = head.requestId;
    throw err;
  }
  return { msgType: head.msgType, requestId: head.requestId, payload, flags: head.flags };
}
