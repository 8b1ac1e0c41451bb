import { ProtocolClient, RequestFailed } from "./client.js";
import { renderApp, type ActionHandlers } from "./render.js";
import { selectionToExplore, type SelectionLike } from "./selection.js";
import {
  initialState,
  ViewStore,
  type CardRecord,
  type MappingPair,
  type MessageRecord,
  type SessionSnapshot,
  type ViewState,
} from "./state.js";

export interface AppOptions {
  /** Selection source; defaults to the document's window selection. */
  getSelection?: () => SelectionLike | null;
  /** Recall countdown driver; defaults to a 1s interval. */
  startTicker?: (tick: () => void) => () => void;
}

function defaultTicker(tick: () => void): () => void {
  const handle = setInterval(tick, 1000);
  return () => clearInterval(handle);
}

/**
 * Wires the protocol client, the view store and the renderer together.
 * Every user action maps to at most one protocol frame; rendering is a
 * pure function of the store's state.
 */
export class App {
  readonly store: ViewStore;
  private stopTicker: (() => void) | null = null;
  private readonly getSelection: () => SelectionLike | null;
  private readonly startTicker: (tick: () => void) => () => void;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ProtocolClient,
    options: AppOptions = {},
  ) {
    const doc = root.ownerDocument;
    this.getSelection =
      options.getSelection ?? (() => doc.defaultView?.getSelection() ?? null);
    this.startTicker = options.startTicker ?? defaultTicker;
    this.store = new ViewStore(initialState("chatlearn"));
  }

  async start(participant: string): Promise<void> {
    await this.client.ready();
    this.client.onPush((frame) => this.onPush(frame.type, frame.payload));
    const ack = await this.client.request("hello", { role: "NNS", participant });
    const snapshot = ack as unknown as SessionSnapshot;
    this.store.subscribe(() => this.render());
    this.store.dispatch({ kind: "snapshot", snapshot });

    if (this.store.state.condition === "chatlearn") {
      // Text-selection explore is only wired up when the feature exists;
      // baseline documents have no selectable bodies to resolve against.
      this.root.addEventListener("mouseup", () => this.onSelectionSettled());
    }
    this.render();
  }

  private render(): void {
    const doc = this.root.ownerDocument;
    this.root.replaceChildren(renderApp(doc, this.store.state, this.handlers));
  }

  private onPush(type: string, payload: Record<string, unknown>): void {
    if (type === "message") {
      this.store.dispatch({
        kind: "peer-message",
        message: payload["message"] as unknown as MessageRecord,
      });
    } else if (type === "cards") {
      this.store.dispatch({
        kind: "cards",
        cards: payload["cards"] as unknown as CardRecord[],
      });
    } else if (type === "error") {
      this.store.dispatch({
        kind: "error",
        code: String(payload["code"] ?? "unknown"),
        message: String(payload["message"] ?? ""),
      });
    }
  }

  private fail(err: unknown): void {
    if (err instanceof RequestFailed) {
      this.store.dispatch({ kind: "error", code: err.code, message: err.message });
    } else {
      this.store.dispatch({ kind: "error", code: "connection", message: String(err) });
    }
  }

  private onSelectionSettled(): void {
    const target = selectionToExplore(this.getSelection());
    if (!target) return;
    this.client
      .request("explore", { message_id: target.messageId, selection: target.text })
      .then((ack) => {
        const explanation = ack["explanation"] as Record<string, unknown>;
        this.store.dispatch({
          kind: "explanation",
          messageId: Number(explanation["message_id"]),
          phrase: String(explanation["phrase"]),
          text: String(explanation["explanation_text"]),
        });
      })
      .catch((err) => this.fail(err));
  }

  private readonly handlers: ActionHandlers = {
    onTranslateToggle: (messageId) => {
      const message = this.store.state.messages.find((m) => m.id === messageId);
      if (!message) return;
      if (message.fullTranslation !== null) {
        // Already fetched (and cached server-side); toggling is local.
        this.store.dispatch({ kind: "translation-toggled", messageId });
        return;
      }
      this.client
        .request("translate_full", { message_id: messageId })
        .then((ack) => {
          const translation = ack["translation"] as Record<string, unknown>;
          this.store.dispatch({
            kind: "translation",
            messageId,
            translatedText: String(translation["translated_text"]),
          });
        })
        .catch((err) => this.fail(err));
    },

    onDraftEdited: (text) => {
      this.store.dispatch({ kind: "draft-edited", text });
    },

    onBuild: () => {
      const draft = this.store.state.draft.text;
      if (!draft.trim()) return;
      this.client
        .request("build_expression", { draft })
        .then((ack) => {
          const build = ack["build"] as Record<string, unknown>;
          const mapping = build["mapping"] as { pairs?: unknown[] } | null;
          const pairs: MappingPair[] = ((mapping?.pairs ?? []) as [string, string][]).map(
            ([l1, l2]) => [l1, l2] as const,
          );
          this.store.dispatch({
            kind: "build-result",
            draft: String(build["draft"]),
            translatedText: String(build["translated_text"]),
            pairs,
          });
        })
        .catch((err) => this.fail(err));
    },

    onSend: () => {
      const { text, preview, sending } = this.store.state.draft;
      if (!text.trim() || sending) return;
      const payload: Record<string, unknown> = { text };
      if (preview) payload["shown_translation"] = preview.translatedText;
      this.store.dispatch({ kind: "draft-sent" });
      this.client
        .request("message", payload)
        .then((ack) => {
          this.store.dispatch({
            kind: "own-message",
            message: ack["message"] as unknown as MessageRecord,
          });
        })
        .catch((err) => {
          this.store.dispatch({ kind: "send-failed" });
          this.fail(err);
        });
    },

    onCardClick: (entryId) => {
      this.client
        .request("card_interact", { entry_id: entryId })
        .then((ack) => {
          const entry = ack["entry"] as Record<string, unknown>;
          this.store.dispatch({
            kind: "card-acknowledged",
            entryId,
            pinned: Boolean(entry["pinned"]),
          });
        })
        .catch((err) => this.fail(err));
    },

    onBeginRecall: () => {
      this.client
        .request("begin_recall", {})
        .then((ack) => {
          this.store.dispatch({
            kind: "recall-begun",
            budgetSeconds: Number(ack["budget_seconds"]),
          });
          this.stopTicker = this.startTicker(() =>
            this.store.dispatch({ kind: "recall-tick" }),
          );
        })
        .catch((err) => this.fail(err));
    },

    onRecallItemAdded: () => {
      this.store.dispatch({ kind: "recall-item-added" });
    },

    onRecallItemEdited: (index, field, value) => {
      this.store.dispatch({ kind: "recall-item-edited", index, field, value });
    },

    onRecallSubmit: () => {
      const recall = this.store.state.recall;
      const items = recall.items
        .filter((item) => item.expression.trim().length > 0)
        .map((item) => ({
          expression: item.expression,
          confidence: item.confidence,
          difficulty: item.difficulty,
        }));
      const withinSeconds = recall.budgetSeconds - recall.remainingSeconds;
      this.client
        .request("recall_submit", { items, submitted_within_seconds: withinSeconds })
        .then((ack) => {
          if (this.stopTicker) {
            this.stopTicker();
            this.stopTicker = null;
          }
          this.store.dispatch({
            kind: "recall-finished",
            report: ack["report"] as Record<string, unknown>,
          });
        })
        .catch((err) => this.fail(err));
    },
  };

  get state(): ViewState {
    return this.store.state;
  }
}
