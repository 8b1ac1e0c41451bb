/**
 * DOM rendering. The tree is rebuilt from ViewState on every change.
 *
 * Condition gating is structural: the learning affordances (translate
 * buttons, selectable message bodies, extraction underlines, the card
 * panel, the build action) are only ever created inside chatlearn
 * branches, so a baseline render contains none of their nodes.
 */

import type {
  CardView,
  MessageView,
  RecallItemDraft,
  UnderlineSpan,
  ViewState,
} from "./state.js";

export interface ActionHandlers {
  onTranslateToggle(messageId: number): void;
  onDraftEdited(text: string): void;
  onBuild(): void;
  onSend(): void;
  onCardClick(entryId: number): void;
  onBeginRecall(): void;
  onRecallItemAdded(): void;
  onRecallItemEdited(
    index: number,
    field: "expression" | "confidence" | "difficulty",
    value: string,
  ): void;
  onRecallSubmit(): void;
}

type Doc = Document;

function el(
  doc: Doc,
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Message text interleaved with underlined extraction spans. */
function renderUnderlinedText(
  doc: Doc,
  text: string,
  underlines: UnderlineSpan[],
): HTMLElement {
  const body = el(doc, "span", "message-text");
  let cursor = 0;
  for (const span of underlines) {
    if (span.start > cursor) {
      body.append(doc.createTextNode(text.slice(cursor, span.start)));
    }
    const mark = el(doc, "u", "underline", text.slice(span.start, span.end));
    mark.setAttribute("data-l1", span.l1);
    mark.title = `${span.l1}: ${span.l2}`;
    body.append(mark);
    cursor = span.end;
  }
  if (cursor < text.length) body.append(doc.createTextNode(text.slice(cursor)));
  return body;
}

function renderLegend(doc: Doc, message: MessageView): HTMLElement {
  const legend = el(doc, "div", "extraction-legend");
  for (const [l1, l2] of message.legend ?? []) {
    const pair = el(doc, "span", "legend-pair", l2 ? `${l1}: ${l2}` : `${l1}: —`);
    pair.setAttribute("data-l1", l1);
    legend.append(pair);
  }
  return legend;
}

function renderMessage(
  doc: Doc,
  message: MessageView,
  chatlearn: boolean,
  handlers: ActionHandlers,
): HTMLElement {
  const item = el(doc, "li", "message");
  item.setAttribute("data-sender", message.sender);
  if (message.id !== null) item.setAttribute("data-message-id", String(message.id));
  if (message.pending) item.classList.add("pending");

  const displayText = message.shownTranslation ?? message.originalText;
  const body = el(doc, "div", "message-body");
  if (chatlearn && message.underlines.length > 0) {
    body.append(renderUnderlinedText(doc, displayText, message.underlines));
  } else {
    body.append(el(doc, "span", "message-text", displayText));
  }
  if (chatlearn && message.sender === "NS" && message.id !== null) {
    // The selectable wrapper is what the explorer's selection handling
    // anchors to; baseline renders a plain body instead.
    body.setAttribute("data-selectable", String(message.id));
  }
  item.append(body);

  if (chatlearn && message.sender === "NS" && message.id !== null) {
    const messageId = message.id;
    const toggle = el(
      doc,
      "button",
      "translate-toggle",
      message.translationShown ? "Hide translation" : "Show translation",
    );
    toggle.addEventListener("click", () => handlers.onTranslateToggle(messageId));
    item.append(toggle);
    if (message.translationShown && message.fullTranslation !== null) {
      item.append(el(doc, "div", "translation", message.fullTranslation));
    }
  }

  if (chatlearn) {
    for (const note of message.explanations) {
      const box = el(doc, "div", "explanation");
      box.append(el(doc, "span", "explained-phrase", note.phrase));
      box.append(el(doc, "span", "explanation-text", note.text));
      item.append(box);
    }
    if (message.legend && message.legend.length > 0) item.append(renderLegend(doc, message));
  }

  return item;
}

function renderCard(
  doc: Doc,
  card: CardView,
  onClick: (() => void) | null,
): HTMLElement {
  const box = el(doc, "div", "card");
  box.setAttribute("data-entry-id", String(card.entryId));
  box.append(el(doc, "div", "card-expression", card.surfaceText));
  // The captured context is shown as the full sentence, not a snippet.
  box.append(el(doc, "div", "card-context", card.context));
  if (onClick) {
    box.classList.add("interactive");
    box.addEventListener("click", onClick);
  }
  return box;
}

function renderCardPanel(doc: Doc, state: ViewState, handlers: ActionHandlers): HTMLElement {
  const panel = el(doc, "aside", "card-panel");

  const pinned = el(doc, "section", "pinned-cards");
  pinned.append(el(doc, "h3", "panel-title", "Pinned"));
  for (const card of state.pinnedCards) pinned.append(renderCard(doc, card, null));
  panel.append(pinned);

  const transient = el(doc, "section", "transient-cards");
  transient.append(el(doc, "h3", "panel-title", "Review"));
  for (const card of state.transientCards) {
    transient.append(renderCard(doc, card, () => handlers.onCardClick(card.entryId)));
  }
  panel.append(transient);
  return panel;
}

function renderComposer(doc: Doc, state: ViewState, handlers: ActionHandlers): HTMLElement {
  const composer = el(doc, "div", "composer");

  const input = doc.createElement("textarea");
  input.className = "draft-input";
  input.value = state.draft.text;
  input.addEventListener("input", () => handlers.onDraftEdited(input.value));
  composer.append(input);

  if (state.condition === "chatlearn") {
    const build = el(doc, "button", "build", "Translate draft");
    build.addEventListener("click", () => handlers.onBuild());
    composer.append(build);
    if (state.draft.preview) {
      const preview = el(doc, "div", "draft-preview");
      preview.append(el(doc, "div", "preview-text", state.draft.preview.translatedText));
      composer.append(preview);
    }
  }

  const send = el(doc, "button", "send", "Send");
  if (state.draft.sending) send.setAttribute("disabled", "");
  send.addEventListener("click", () => handlers.onSend());
  composer.append(send);

  const finish = el(doc, "button", "begin-recall", "End session");
  finish.addEventListener("click", () => handlers.onBeginRecall());
  composer.append(finish);

  return composer;
}

function renderRecallItem(
  doc: Doc,
  item: RecallItemDraft,
  index: number,
  handlers: ActionHandlers,
): HTMLElement {
  const row = el(doc, "div", "recall-item");

  const expression = doc.createElement("input");
  expression.type = "text";
  expression.className = "recall-expression";
  expression.value = item.expression;
  expression.addEventListener("input", () =>
    handlers.onRecallItemEdited(index, "expression", expression.value),
  );
  row.append(expression);

  for (const field of ["confidence", "difficulty"] as const) {
    const slider = doc.createElement("input");
    slider.type = "range";
    slider.min = "1";
    slider.max = "7";
    slider.step = "1";
    slider.className = `recall-${field}`;
    slider.value = String(item[field]);
    slider.addEventListener("input", () =>
      handlers.onRecallItemEdited(index, field, slider.value),
    );
    row.append(slider);
  }
  return row;
}

function renderRecallScreen(doc: Doc, state: ViewState, handlers: ActionHandlers): HTMLElement {
  const screen = el(doc, "div", "recall-screen");
  screen.append(
    el(doc, "div", "recall-countdown", `${state.recall.remainingSeconds}s`),
  );
  const list = el(doc, "div", "recall-items");
  state.recall.items.forEach((item, index) =>
    list.append(renderRecallItem(doc, item, index, handlers)),
  );
  screen.append(list);

  const add = el(doc, "button", "add-recall-item", "Add expression");
  add.addEventListener("click", () => handlers.onRecallItemAdded());
  screen.append(add);

  const submit = el(doc, "button", "recall-submit", "Submit");
  submit.addEventListener("click", () => handlers.onRecallSubmit());
  screen.append(submit);
  return screen;
}

function renderReport(doc: Doc, report: Record<string, unknown>): HTMLElement {
  const summary = el(doc, "div", "report-summary");
  summary.append(el(doc, "h2", "panel-title", "Session report"));
  const recall = report["recall"] as Record<string, unknown> | undefined;
  const lines = [
    `Messages sent: ${String(report["message_count"] ?? 0)}`,
    `Expressions recalled: ${String(recall?.["quantity"] ?? 0)}`,
  ];
  for (const line of lines) summary.append(el(doc, "div", "report-line", line));
  return summary;
}

export function renderApp(
  doc: Doc,
  state: ViewState,
  handlers: ActionHandlers,
): HTMLElement {
  const root = el(doc, "div", "chatlearn-app");
  root.setAttribute("data-condition", state.condition);

  if (state.sessionState === "closed" && state.report) {
    root.append(renderReport(doc, state.report));
    return root;
  }
  if (state.recall.active) {
    root.append(renderRecallScreen(doc, state, handlers));
    return root;
  }

  const chatlearn = state.condition === "chatlearn";
  const conversation = el(doc, "ul", "messages");
  for (const message of state.messages) {
    conversation.append(renderMessage(doc, message, chatlearn, handlers));
  }
  root.append(conversation);
  root.append(renderComposer(doc, state, handlers));
  if (chatlearn) root.append(renderCardPanel(doc, state, handlers));

  if (state.lastError) {
    root.append(el(doc, "div", "error-banner", `${state.lastError.code}: ${state.lastError.message}`));
  }
  return root;
}
