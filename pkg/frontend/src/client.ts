import {
  CLIENT_FRAME_TYPES,
  decodeFrame,
  encodeFrame,
  makeFrame,
  ProtocolViolation,
  type FrameType,
  type WireFrame,
} from "./protocol.js";

/**
 * The slice of the WebSocket API the client needs. Both the browser's
 * WebSocket and the `ws` package implement it, so tests can drive the
 * real server from node while production code uses the native socket.
 */
export interface WireSocket {
  readyState: number;
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", listener: () => void): void;
  addEventListener(type: "close", listener: () => void): void;
  addEventListener(type: "message", listener: (event: { data: unknown }) => void): void;
  addEventListener(type: "error", listener: (event: unknown) => void): void;
}

const SOCKET_OPEN = 1;

/** A request the server answered with an error frame. */
export class RequestFailed extends Error {
  constructor(
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

interface Pending {
  resolve(payload: Record<string, unknown>): void;
  reject(err: Error): void;
}

export type PushHandler = (frame: WireFrame) => void;

/**
 * Request/response correlation over the frame protocol.
 *
 * Every request carries a fresh `request_id`; the server echoes it in the
 * matching ack or error. Frames without a pending request_id are pushes
 * (message relays, card notifications) and go to the push handlers in
 * arrival order.
 */
export class ProtocolClient {
  private readonly pending = new Map<string, Pending>();
  private readonly pushHandlers: PushHandler[] = [];
  private counter = 0;
  private closed = false;

  constructor(
    private readonly socket: WireSocket,
    readonly sessionToken: string,
    private readonly label = "ui",
  ) {
    socket.addEventListener("message", (event) => this.onMessage(event.data));
    socket.addEventListener("close", () => this.onClose());
    socket.addEventListener("error", () => this.onClose());
  }

  /** Resolves once the underlying socket is open. */
  ready(): Promise<void> {
    if (this.socket.readyState === SOCKET_OPEN) return Promise.resolve();
    return new Promise((resolve, reject) => {
      this.socket.addEventListener("open", () => resolve());
      this.socket.addEventListener("error", (event) =>
        reject(event instanceof Error ? event : new Error("socket error")),
      );
    });
  }

  onPush(handler: PushHandler): void {
    this.pushHandlers.push(handler);
  }

  /** Send one frame and await its ack payload; an error frame rejects. */
  request(type: FrameType, payload: Record<string, unknown>): Promise<Record<string, unknown>> {
    if (!CLIENT_FRAME_TYPES.includes(type)) {
      return Promise.reject(new ProtocolViolation(`frame type ${type} is not client-sendable`));
    }
    if (this.closed) return Promise.reject(new Error("connection is closed"));
    const requestId = `${this.label}-${++this.counter}`;
    const frame = makeFrame(type, this.sessionToken, { ...payload, request_id: requestId });
    return new Promise((resolve, reject) => {
      this.pending.set(requestId, { resolve, reject });
      this.socket.send(encodeFrame(frame));
    });
  }

  close(): void {
    this.socket.close();
  }

  private onMessage(data: unknown): void {
    const raw =
      typeof data === "string" ? data : new TextDecoder().decode(data as ArrayBufferView);
    const frame = decodeFrame(raw);
    if (frame.type === "ack" || frame.type === "error") {
      const requestId = frame.payload["request_id"];
      if (typeof requestId === "string" && this.pending.has(requestId)) {
        const waiter = this.pending.get(requestId)!;
        this.pending.delete(requestId);
        if (frame.type === "ack") {
          waiter.resolve(frame.payload);
        } else {
          waiter.reject(
            new RequestFailed(
              String(frame.payload["code"] ?? "unknown"),
              String(frame.payload["message"] ?? "request failed"),
            ),
          );
        }
        return;
      }
    }
    for (const handler of this.pushHandlers) handler(frame);
  }

  private onClose(): void {
    this.closed = true;
    const waiters = [...this.pending.values()];
    this.pending.clear();
    for (const waiter of waiters) waiter.reject(new Error("connection closed mid-request"));
  }
}
