/**
 * View state and its reducer. All business outcomes (translations,
 * extractions, retrieval, metrics) come from server frames; this module
 * only decides what is currently on screen.
 */

export type Condition = "baseline" | "chatlearn";
export type Role = "NNS" | "NS";

export interface UnderlineSpan {
  start: number;
  end: number;
  l1: string;
  l2: string;
}

export type MappingPair = readonly [l1: string, l2: string];

export interface MessageView {
  /** Server id; null while this is an optimistic echo awaiting its ack. */
  id: number | null;
  sender: Role;
  originalText: string;
  shownTranslation: string | null;
  fullTranslation: string | null;
  translationShown: boolean;
  explanations: { phrase: string; text: string }[];
  underlines: UnderlineSpan[];
  legend: MappingPair[] | null;
  pending: boolean;
}

export interface CardView {
  entryId: number;
  surfaceText: string;
  context: string;
}

export interface BuildPreview {
  draft: string;
  translatedText: string;
  pairs: MappingPair[];
}

export interface DraftState {
  text: string;
  preview: BuildPreview | null;
  sending: boolean;
}

export interface RecallItemDraft {
  expression: string;
  confidence: number;
  difficulty: number;
}

export interface RecallView {
  active: boolean;
  budgetSeconds: number;
  remainingSeconds: number;
  items: RecallItemDraft[];
}

export interface ViewState {
  condition: Condition;
  sessionState: string;
  messages: MessageView[];
  draft: DraftState;
  transientCards: CardView[];
  pinnedCards: CardView[];
  recall: RecallView;
  report: Record<string, unknown> | null;
  lastError: { code: string; message: string } | null;
}

/** How many transient cards may be on screen; the oldest is evicted. */
export const MAX_TRANSIENT_CARDS = 3;

export function initialState(condition: Condition): ViewState {
  return {
    condition,
    sessionState: "active",
    messages: [],
    draft: { text: "", preview: null, sending: false },
    transientCards: [],
    pinnedCards: [],
    recall: { active: false, budgetSeconds: 0, remainingSeconds: 0, items: [] },
    report: null,
    lastError: null,
  };
}

// -- server payload shapes (as delivered inside ack/push frames) ------------

export interface MessageRecord {
  id: number;
  sender: Role;
  original_text: string;
  shown_translation: string | null;
}

export interface PinnedEntryRecord {
  entry_id: number;
  surface_text: string;
  shown_context: string;
  pinned: boolean;
}

export interface SessionSnapshot {
  session: { id: string; config: { condition: Condition }; state: string };
  history: MessageRecord[];
  entries: PinnedEntryRecord[];
}

export interface CardRecord {
  entry_id: number;
  surface_text: string;
  shown_context: string;
}

export type Action =
  | { kind: "snapshot"; snapshot: SessionSnapshot }
  | { kind: "peer-message"; message: MessageRecord }
  | { kind: "own-message"; message: MessageRecord }
  | { kind: "draft-edited"; text: string }
  | { kind: "draft-sent" }
  | { kind: "send-failed" }
  | { kind: "translation"; messageId: number; translatedText: string }
  | { kind: "translation-toggled"; messageId: number }
  | { kind: "explanation"; messageId: number; phrase: string; text: string }
  | { kind: "build-result"; draft: string; translatedText: string; pairs: MappingPair[] }
  | { kind: "cards"; cards: CardRecord[] }
  | { kind: "card-acknowledged"; entryId: number; pinned: boolean }
  | { kind: "recall-begun"; budgetSeconds: number }
  | { kind: "recall-tick" }
  | { kind: "recall-item-added" }
  | {
      kind: "recall-item-edited";
      index: number;
      field: "expression" | "confidence" | "difficulty";
      value: string | number;
    }
  | { kind: "recall-finished"; report: Record<string, unknown> }
  | { kind: "error"; code: string; message: string };

/**
 * Place one underline per mapping pair with a non-empty span, scanning
 * left to right and skipping regions already claimed, so spans never
 * overlap. Pairs whose span cannot be placed stay legend-only.
 */
export function computeUnderlines(text: string, pairs: readonly MappingPair[]): UnderlineSpan[] {
  const placed: UnderlineSpan[] = [];
  for (const [l1, l2] of pairs) {
    if (!l2) continue;
    let from = 0;
    while (from + l2.length <= text.length) {
      const start = text.indexOf(l2, from);
      if (start < 0) break;
      const end = start + l2.length;
      if (!placed.some((span) => start < span.end && span.start < end)) {
        placed.push({ start, end, l1, l2 });
        break;
      }
      from = start + 1;
    }
  }
  return placed.sort((a, b) => a.start - b.start);
}

function messageFromRecord(record: MessageRecord): MessageView {
  return {
    id: record.id,
    sender: record.sender,
    originalText: record.original_text,
    shownTranslation: record.shown_translation ?? null,
    fullTranslation: null,
    translationShown: false,
    explanations: [],
    underlines: [],
    legend: null,
    pending: false,
  };
}

function cardFromRecord(record: CardRecord): CardView {
  return { entryId: record.entry_id, surfaceText: record.surface_text, context: record.shown_context };
}

function updateMessage(
  state: ViewState,
  messageId: number,
  update: (message: MessageView) => MessageView,
): ViewState {
  return {
    ...state,
    messages: state.messages.map((m) => (m.id === messageId ? update(m) : m)),
  };
}

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.kind) {
    case "snapshot": {
      const { session, history, entries } = action.snapshot;
      return {
        ...initialState(session.config.condition),
        sessionState: session.state,
        messages: history.map(messageFromRecord),
        pinnedCards: entries.map((e) => ({
          entryId: e.entry_id,
          surfaceText: e.surface_text,
          context: e.shown_context,
        })),
      };
    }

    case "peer-message":
      return { ...state, messages: [...state.messages, messageFromRecord(action.message)] };

    case "own-message": {
      // Reconcile the optimistic echo: the oldest pending view takes the
      // server record's identity but keeps its local decorations.
      const index = state.messages.findIndex((m) => m.pending);
      const record = messageFromRecord(action.message);
      if (index < 0) return { ...state, messages: [...state.messages, record] };
      const echo = state.messages[index]!;
      const reconciled: MessageView = {
        ...echo,
        id: record.id,
        originalText: record.originalText,
        shownTranslation: record.shownTranslation,
        pending: false,
      };
      const messages = [...state.messages];
      messages[index] = reconciled;
      return { ...state, messages, draft: { text: "", preview: null, sending: false } };
    }

    case "draft-edited":
      // Editing invalidates a stale build preview.
      return { ...state, draft: { text: action.text, preview: null, sending: false } };

    case "draft-sent": {
      const preview = state.draft.preview;
      const shown = preview ? preview.translatedText : null;
      const echo: MessageView = {
        id: null,
        sender: "NNS",
        originalText: state.draft.text,
        shownTranslation: shown,
        fullTranslation: null,
        translationShown: false,
        explanations: [],
        underlines: preview ? computeUnderlines(preview.translatedText, preview.pairs) : [],
        legend: preview ? preview.pairs : null,
        pending: true,
      };
      return {
        ...state,
        messages: [...state.messages, echo],
        draft: { ...state.draft, sending: true },
      };
    }

    case "send-failed":
      return {
        ...state,
        messages: state.messages.filter((m) => !m.pending),
        draft: { ...state.draft, sending: false },
      };

    case "translation":
      return updateMessage(state, action.messageId, (m) => ({
        ...m,
        fullTranslation: action.translatedText,
        translationShown: true,
      }));

    case "translation-toggled":
      return updateMessage(state, action.messageId, (m) => ({
        ...m,
        translationShown: !m.translationShown,
      }));

    case "explanation":
      return updateMessage(state, action.messageId, (m) => ({
        ...m,
        explanations: [...m.explanations, { phrase: action.phrase, text: action.text }],
      }));

    case "build-result":
      if (action.draft !== state.draft.text) return state; // stale ack
      return {
        ...state,
        draft: {
          ...state.draft,
          preview: {
            draft: action.draft,
            translatedText: action.translatedText,
            pairs: action.pairs,
          },
        },
      };

    case "cards": {
      let transient = [...state.transientCards];
      for (const record of action.cards) {
        if (state.pinnedCards.some((c) => c.entryId === record.entry_id)) continue;
        transient = transient.filter((c) => c.entryId !== record.entry_id);
        transient.push(cardFromRecord(record));
      }
      while (transient.length > MAX_TRANSIENT_CARDS) transient.shift();
      return { ...state, transientCards: transient };
    }

    case "card-acknowledged": {
      if (!action.pinned) return state;
      const card = state.transientCards.find((c) => c.entryId === action.entryId);
      if (!card || state.pinnedCards.some((c) => c.entryId === action.entryId)) return state;
      return {
        ...state,
        transientCards: state.transientCards.filter((c) => c.entryId !== action.entryId),
        pinnedCards: [...state.pinnedCards, card],
      };
    }

    case "recall-begun":
      return {
        ...state,
        sessionState: "recall_test",
        recall: {
          active: true,
          budgetSeconds: action.budgetSeconds,
          remainingSeconds: action.budgetSeconds,
          items: [{ expression: "", confidence: 4, difficulty: 4 }],
        },
      };

    case "recall-tick":
      if (!state.recall.active) return state;
      return {
        ...state,
        recall: {
          ...state.recall,
          remainingSeconds: Math.max(0, state.recall.remainingSeconds - 1),
        },
      };

    case "recall-item-added":
      return {
        ...state,
        recall: {
          ...state.recall,
          items: [...state.recall.items, { expression: "", confidence: 4, difficulty: 4 }],
        },
      };

    case "recall-item-edited": {
      const items = state.recall.items.map((item, i) => {
        if (i !== action.index) return item;
        if (action.field === "expression") return { ...item, expression: String(action.value) };
        const value = clampScale(Number(action.value));
        return { ...item, [action.field]: value };
      });
      return { ...state, recall: { ...state.recall, items } };
    }

    case "recall-finished":
      return {
        ...state,
        sessionState: "closed",
        recall: { ...state.recall, active: false },
        report: action.report,
      };

    case "error":
      return { ...state, lastError: { code: action.code, message: action.message } };
  }
}

function clampScale(value: number): number {
  if (Number.isNaN(value)) return 4;
  return Math.min(7, Math.max(1, Math.round(value)));
}

export type Listener = (state: ViewState) => void;

/** Holds the current state and re-renders subscribers after each action. */
export class ViewStore {
  private listeners: Listener[] = [];

  constructor(private current: ViewState) {}

  get state(): ViewState {
    return this.current;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  dispatch(action: Action): void {
    this.current = reduce(this.current, action);
    for (const listener of this.listeners) listener(this.current);
  }
}
