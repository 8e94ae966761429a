/**
 * Minimal stream-mode protocol client, used by the test suite to drive both
 * this host and the primary server identically. Strict request/response;
 * not a public serving surface.
 */

import * as net from "net";

import {
  Frame,
  HEADER_SIZE,
  MsgType,
  TRAILER_SIZE,
  decodeFrame,
  decodeHeader,
  encodeFrame,
  frame,
} from "./frame";
import { Value, decodeValue, encodeValue, vmap } from "./value";

export class TestClient {
  private socket!: net.Socket;
  private buffer: Buffer = Buffer.alloc(0);
  private waiter: ((f: Frame) => void) | null = null;
  private failer: ((e: Error) => void) | null = null;
  private requestId = 0n;

  static async connect(host: string, port: number): Promise<TestClient> {
    const client = new TestClient();
    await new Promise<void>((resolve, reject) => {
      client.socket = net.createConnection({ host, port }, resolve);
      client.socket.once("error", reject);
    });
    client.socket.setNoDelay(true);
    client.socket.on("data", (chunk) => client.feed(chunk));
    client.socket.on("close", () => {
      client.failer?.(new Error("connection closed"));
      client.waiter = client.failer = null;
    });
    const ack = await client.call(MsgType.HELLO, encodeValue(vmap({ proto_version: 1n })));
    if (ack.msgType !== MsgType.HELLO_ACK) {
      throw new Error(`expected HELLO_ACK, got ${MsgType[ack.msgType]}`);
    }
    return client;
  }

  private feed(chunk: Buffer) {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    while (this.buffer.length >= HEADER_SIZE) {
      const { payloadLen } = decodeHeader(new Uint8Array(this.buffer.subarray(0, HEADER_SIZE)));
      const total = HEADER_SIZE + payloadLen + TRAILER_SIZE;
      if (this.buffer.length < total) return;
      const raw = this.buffer.subarray(0, total);
      this.buffer = this.buffer.subarray(total);
      const f = decodeFrame(new Uint8Array(raw));
      const waiter = this.waiter;
      this.waiter = this.failer = null;
      waiter?.(f);
    }
  }

  nextRequestId(): bigint {
    this.requestId += 1n;
    return this.requestId;
  }

  call(msgType: MsgType, payload: Uint8Array = new Uint8Array(0), flags = 0,
       timeoutMs = 30000): Promise<Frame> {
    const rid = this.nextRequestId();
    return this.callRaw(encodeFrame(frame(msgType, rid, payload, flags)), timeoutMs);
  }

  /** Send pre-encoded frame octets and await one reply frame. */
  callRaw(data: Uint8Array, timeoutMs = 30000): Promise<Frame> {
    return new Promise<Frame>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.waiter = this.failer = null;
        reject(new Error("reply timed out"));
      }, timeoutMs);
      this.waiter = (f) => {
        clearTimeout(timer);
        resolve(f);
      };
      this.failer = (e) => {
        clearTimeout(timer);
        reject(e);
      };
      this.socket.write(data);
    });
  }

  callValue(msgType: MsgType, value: Value, flags = 0): Promise<Frame> {
    return this.call(msgType, encodeValue(value), flags);
  }

  async close(): Promise<void> {
    try {
      this.socket.write(encodeFrame(frame(MsgType.CLOSE, this.nextRequestId())));
    } catch {
      // ignore: closing anyway
    }
    this.socket.destroy();
  }
}

export function decodedPayload(f: Frame): Value {
  const [value] = decodeValue(f.payload);
  return value;
}
