/**
 * Wire protocol shared with the chat service: single-line JSON frames
 * `{type, session_token, payload}` over a WebSocket. The type vocabulary
 * is closed; anything else is a protocol violation on either side.
 */

export const FRAME_TYPES = [
  "hello",
  "message",
  "translate_full",
  "explore",
  "build_expression",
  "cards",
  "card_interact",
  "begin_recall",
  "recall_submit",
  "error",
  "ack",
] as const;

export type FrameType = (typeof FRAME_TYPES)[number];

// Types this client is allowed to send; the rest are server-emitted only.
export const CLIENT_FRAME_TYPES: readonly FrameType[] = [
  "hello",
  "message",
  "translate_full",
  "explore",
  "build_expression",
  "card_interact",
  "begin_recall",
  "recall_submit",
];

export interface WireFrame {
  type: FrameType;
  session_token: string;
  payload: Record<string, unknown>;
}

export class ProtocolViolation extends Error {}

function isFrameType(value: unknown): value is FrameType {
  return typeof value === "string" && (FRAME_TYPES as readonly string[]).includes(value);
}

function isPlainObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

export function makeFrame(
  type: FrameType,
  sessionToken: string,
  payload: Record<string, unknown>,
): WireFrame {
  if (!isFrameType(type)) throw new ProtocolViolation(`unknown frame type: ${String(type)}`);
  if (typeof sessionToken !== "string" || sessionToken.length === 0) {
    throw new ProtocolViolation("session_token must be a non-empty string");
  }
  if (!isPlainObject(payload)) throw new ProtocolViolation("payload must be an object");
  return { type, session_token: sessionToken, payload };
}

/** One frame per line; non-ASCII stays readable, no embedded newlines. */
export function encodeFrame(frame: WireFrame): string {
  const text = JSON.stringify({
    type: frame.type,
    session_token: frame.session_token,
    payload: frame.payload,
  });
  if (text.includes("\n")) throw new ProtocolViolation("frame must encode to a single line");
  return text;
}

export function decodeFrame(raw: string): WireFrame {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    throw new ProtocolViolation(`frame is not valid JSON: ${String(err)}`);
  }
  if (!isPlainObject(parsed)) throw new ProtocolViolation("frame must be a JSON object");
  const { type, session_token: token, payload } = parsed as {
    type?: unknown;
    session_token?: unknown;
    payload?: unknown;
  };
  if (!isFrameType(type)) throw new ProtocolViolation(`unknown frame type: ${String(type)}`);
  if (typeof token !== "string" || token.length === 0) {
    throw new ProtocolViolation("session_token must be a non-empty string");
  }
  if (!isPlainObject(payload)) throw new ProtocolViolation("payload must be an object");
  return { type, session_token: token, payload };
}
