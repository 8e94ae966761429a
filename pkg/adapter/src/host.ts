/**
 * Backend host: accepts delegating connections from the primary policy
 * server and dispatches INITIALIZE/RESET/ACT/PING/CLOSE to a registered
 * agent over the stream transport. There is no shared-memory path here;
 * HELLO_ACK advertises no segment, so negotiation always lands on the
 * stream.
 *
 * The host owns one agent instance. The agent is initialized at most once
 * for the host's lifetime; later connections' INITIALIZE requests are
 * acknowledged without re-running the heavy setup, which keeps per-session
 * semantics identical to the primary server's fresh-agent-per-session
 * behavior for stateless agents while honoring the initialize-exactly-once
 * contract on the shared instance.
 */

import * as net from "net";

import { Agent } from "./agent";
import {
  DEFAULT_MAX_PAYLOAD,
  FLAG_BATCHED,
  Frame,
  HEADER_SIZE,
  IntegrityError,
  MsgType,
  ProtocolError,
  TRAILER_SIZE,
  decodeFrame,
  decodeHeader,
  encodeFrame,
  frame,
} from "./frame";
import { decodeObs, encodeAct, obsBatchSize } from "./messages";
import { DecodingError, EncodingError, Value, ValueMap, decodeValue, encodeValue, vmap } from "./value";

const PROTO_VERSION = 1n;

type Phase = "handshake" | "connected" | "initialized" | "ready";

export interface HostOptions {
  host?: string;
  port?: number;
  maxPayload?: number;
  log?: (line: string) => void;
}

export class BackendHost {
  private server: net.Server;
  private agentInitialized = false;
  private sockets = new Set<net.Socket>();

  private constructor(private agent: Agent, private options: HostOptions) {
    this.server = net.createServer((socket) => this.handleConnection(socket));
  }

  static serve(agent: Agent, options: HostOptions = {}): Promise<BackendHost> {
    const host = new BackendHost(agent, options);
    return new Promise((resolve, reject) => {
      host.server.once("error", reject);
      host.server.listen(options.port ?? 0, options.host ?? "127.0.0.1", () => {
        host.server.removeListener("error", reject);
        resolve(host);
      });
    });
  }

  address(): { host: string; port: number } {
    const addr = this.server.address() as net.AddressInfo;
    return { host: addr.address, port: addr.port };
  }

  close(): Promise<void> {
    for (const socket of this.sockets) socket.destroy();
    return new Promise((resolve) => this.server.close(() => resolve()));
  }

  private log(line: string) {
    this.options.log?.(line);
  }

  private handleConnection(socket: net.Socket) {
    socket.setNoDelay(true);
    this.sockets.add(socket);
    const session = new Session(this, socket, this.options.maxPayload ?? DEFAULT_MAX_PAYLOAD);
    socket.on("data", (chunk) => session.feed(chunk));
    socket.on("error", () => socket.destroy());
    socket.on("close", () => this.sockets.delete(socket));
  }

  /** Initialize the shared agent exactly once for the host's lifetime. */
  async ensureInitialized(): Promise<void> {
    if (!this.agentInitialized) {
      await this.agent.initialize();
      this.agentInitialized = true;
    }
  }

  get hostedAgent(): Agent {
    return this.agent;
  }
}

class Session {
  private buffer: Buffer = Buffer.alloc(0);
  private phase: Phase = "handshake";
  private lastRequestId = 0n;
  private queue: Promise<void> = Promise.resolve();

  constructor(private hostRef: BackendHost, private socket: net.Socket,
              private maxPayload: number) {}

  feed(chunk: Buffer) {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    this.drainFrames();
  }

  private drainFrames() {
    while (this.buffer.length >= HEADER_SIZE) {
      let payloadLen: number;
      try {
        payloadLen = decodeHeader(this.buffer.subarray(0, HEADER_SIZE), this.maxPayload).payloadLen;
      } catch (e) {
        // framing lost: report and drop the connection
        this.reply(MsgType.ERROR, 0n, errorPayload("decode_failure", (e as Error).message));
        this.socket.end();
        this.buffer = Buffer.alloc(0);
        return;
      }
      const total = HEADER_SIZE + payloadLen + TRAILER_SIZE;
      if (this.buffer.length < total) return;
      const raw = this.buffer.subarray(0, total);
      this.buffer = this.buffer.subarray(total);
      let f: Frame;
      try {
        f = decodeFrame(new Uint8Array(raw), this.maxPayload);
      } catch (e) {
        if (e instanceof IntegrityError) {
          // frame fully consumed; the stream is still in sync
          this.reply(MsgType.ERROR, e.requestId ?? 0n,
                     errorPayload("integrity_error", e.message));
          continue;
        }
        this.reply(MsgType.ERROR, 0n, errorPayload("decode_failure", (e as Error).message));
        this.socket.end();
        return;
      }
      // strictly serial dispatch: the agent is never called concurrently
      this.queue = this.queue.then(() => this.dispatch(f)).catch(() => {});
    }
  }

  private reply(msgType: MsgType, requestId: bigint, payload: Uint8Array = new Uint8Array(0),
                flags = 0) {
    if (!this.socket.destroyed) {
      this.socket.write(encodeFrame(frame(msgType, requestId, payload, flags)));
    }
  }

  // ERROR frames are control frames: request id echoed, flags always 0
  private replyError(requestId: bigint, code: string, message: string) {
    this.reply(MsgType.ERROR, requestId, errorPayload(code, message));
  }

  private async dispatch(f: Frame): Promise<void> {
    if (this.phase === "handshake") {
      this.handleHello(f);
      return;
    }
    if (f.requestId <= this.lastRequestId) {
      this.replyError(f.requestId, "bad_request_id",
                      `request id ${f.requestId} is not greater than ${this.lastRequestId}`);
      return;
    }
    this.lastRequestId = f.requestId;
    try {
      switch (f.msgType) {
        case MsgType.PING:
          this.reply(MsgType.PING_ACK, f.requestId, f.payload, f.flags);
          return;
        case MsgType.INITIALIZE:
          await this.onInitialize(f);
          return;
        case MsgType.RESET:
          await this.onReset(f);
          return;
        case MsgType.ACT:
          await this.onAct(f);
          return;
        case MsgType.CLOSE:
          this.socket.end();
          return;
        default:
          this.replyError(f.requestId, "bad_message",
                          `${MsgType[f.msgType]} is not a request`);
      }
    } catch (e) {
      if (e instanceof PhaseError) {
        this.replyError(f.requestId, "bad_phase", e.message);
      } else if (e instanceof DecodingError || e instanceof EncodingError
                 || e instanceof ProtocolError) {
        this.replyError(f.requestId, "decode_failure", e.message);
      } else {
        this.replyError(f.requestId, "agent_failure",
                        `${(e as Error).name}: ${(e as Error).message}`);
      }
    }
  }

  private handleHello(f: Frame) {
    if (f.msgType !== MsgType.HELLO) {
      this.replyError(f.requestId, "bad_phase", "expected HELLO first");
      this.socket.end();
      return;
    }
    const [params] = decodeValue(f.payload);
    if (!(params instanceof Map) || params.get("proto_version") !== PROTO_VERSION) {
      this.replyError(f.requestId, "unsupported_version",
                      `host speaks protocol version ${PROTO_VERSION}`);
      this.socket.end();
      return;
    }
    this.lastRequestId = f.requestId;
    this.phase = "connected";
    // no shared-memory segment on this host: advertise none so the peer
    // always stays on the stream
    this.reply(MsgType.HELLO_ACK, f.requestId, encodeValue(vmap({
      shm_name: null,
      shm_capacity: 0n,
      nonce: null,
    })));
  }

  private requirePhase(...allowed: Phase[]) {
    if (!allowed.includes(this.phase)) {
      throw new PhaseError(`not allowed in phase '${this.phase}'`);
    }
  }

  private async onInitialize(f: Frame) {
    this.requirePhase("connected");
    await this.hostRef.ensureInitialized();
    this.phase = "initialized";
    this.reply(MsgType.INITIALIZE_ACK, f.requestId, encodeValue(null));
  }

  private async onReset(f: Frame) {
    this.requirePhase("initialized", "ready");
    const [params] = decodeValue(f.payload);
    if (!(params instanceof Map) || !params.has("obs")) {
      throw new DecodingError("RESET payload must be a map with an 'obs' entry");
    }
    const obs = decodeObs(params.get("obs") as Value, (f.flags & FLAG_BATCHED) !== 0);
    const kwargs = params.get("kwargs") ?? new Map();
    if (!(kwargs instanceof Map)) {
      throw new DecodingError("RESET 'kwargs' must be a map");
    }
    const result = await this.hostRef.hostedAgent.reset(
      obs, params.get("instruction") ?? null, kwargs as ValueMap);
    this.phase = "ready";
    this.reply(MsgType.RESET_ACK, f.requestId,
               encodeValue(result instanceof Map ? result : new Map()));
  }

  private async onAct(f: Frame) {
    this.requirePhase("ready");
    const batched = (f.flags & FLAG_BATCHED) !== 0;
    const [value] = decodeValue(f.payload);
    const obs = decodeObs(value, batched);
    const act = await this.hostRef.hostedAgent.act(obs);
    const batch = obsBatchSize(obs);
    if (batched && batch !== undefined && act.action.shape[0] !== batch) {
      throw new Error(`agent returned batch ${act.action.shape[0]}, request had ${batch}`);
    }
    this.reply(MsgType.ACT_ACK, f.requestId, encodeValue(encodeAct(act, batched)),
               batched ? FLAG_BATCHED : 0);
  }
}

class PhaseError extends Error {}

function errorPayload(code: string, message: string): Uint8Array {
  return encodeValue(vmap({ code, message }));
}
