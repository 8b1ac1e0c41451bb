/** Turning a text selection into an explore request target. */

export interface SelectionLike {
  isCollapsed: boolean;
  anchorNode: Node | null;
  focusNode: Node | null;
  toString(): string;
}

const ELEMENT_NODE = 1;

function enclosingSelectableId(node: Node | null): number | null {
  for (let cur: Node | null = node; cur; cur = cur.parentNode) {
    if (cur.nodeType !== ELEMENT_NODE) continue;
    const value = (cur as Element).getAttribute("data-selectable");
    if (value !== null) return Number(value);
  }
  return null;
}

/**
 * A selection maps to an explore request only when it is non-collapsed,
 * non-blank, and both ends sit inside the same selectable message body.
 * Anything else (collapsed clicks, cross-message drags, selections in
 * chrome around the messages) is a no-op.
 */
export function selectionToExplore(
  selection: SelectionLike | null,
): { messageId: number; text: string } | null {
  if (!selection || selection.isCollapsed) return null;
  const anchorId = enclosingSelectableId(selection.anchorNode);
  const focusId = enclosingSelectableId(selection.focusNode);
  if (anchorId === null || focusId === null || anchorId !== focusId) return null;
  const text = selection.toString().trim();
  if (!text) return null;
  return { messageId: anchorId, text };
}
