export { App, type AppOptions } from "./app.js";
export { ProtocolClient, RequestFailed, type WireSocket, type PushHandler } from "./client.js";
export {
  CLIENT_FRAME_TYPES,
  FRAME_TYPES,
  ProtocolViolation,
  decodeFrame,
  encodeFrame,
  makeFrame,
  type FrameType,
  type WireFrame,
} from "./protocol.js";
export { renderApp, type ActionHandlers } from "./render.js";
export { selectionToExplore, type SelectionLike } from "./selection.js";
export {
  MAX_TRANSIENT_CARDS,
  ViewStore,
  computeUnderlines,
  initialState,
  reduce,
  type Action,
  type CardView,
  type Condition,
  type MappingPair,
  type MessageView,
  type UnderlineSpan,
  type ViewState,
} from "./state.js";
