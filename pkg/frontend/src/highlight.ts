/**
 * Sentence rendering with subject and object spans highlighted.
 *
 * Spans are inclusive token index ranges. Tokens are placed into the DOM
 * individually and never re-tokenized from a joined string, so highlighting
 * is exact for any token content, including multi-byte characters.
 */

import type { SlotPayload } from "./types.js";

type Role = "none" | "subj" | "obj";

interface Segment {
  role: Role;
  tokens: string[];
}

function roleAt(i: number, slot: SlotPayload): Role {
  const [subjStart, subjEnd] = slot.subj_span;
  const [objStart, objEnd] = slot.obj_span;
  if (i >= subjStart && i <= subjEnd) {
    return "subj";
  }
  if (i >= objStart && i <= objEnd) {
    return "obj";
  }
  return "none";
}

function segments(slot: SlotPayload): Segment[] {
  const runs: Segment[] = [];
  slot.tokens.forEach((token, i) => {
    const role = roleAt(i, slot);
    const last = runs[runs.length - 1];
    if (last !== undefined && last.role === role) {
      last.tokens.push(token);
    } else {
      runs.push({ role, tokens: [token] });
    }
  });
  return runs;
}

function tokenSpan(token: string): HTMLElement {
  const el = document.createElement("span");
  el.className = "tok";
  el.textContent = token;
  return el;
}

/** Render the sentence with both spans wrapped in <mark> elements. */
export function renderSentence(slot: SlotPayload): HTMLElement {
  const container = document.createElement("p");
  container.className = "sentence";
  segments(slot).forEach((segment, index) => {
    if (index > 0) {
      container.appendChild(document.createTextNode(" "));
    }
    if (segment.role === "none") {
      container.appendChild(document.createTextNode(segment.tokens.join(" ")));
      return;
    }
    const markEl = document.createElement("mark");
    markEl.className = `span-${segment.role}`;
    markEl.title = segment.role === "subj" ? slot.subj_type : slot.obj_type;
    segment.tokens.forEach((token, i) => {
      if (i > 0) {
        markEl.appendChild(document.createTextNode(" "));
      }
      markEl.appendChild(tokenSpan(token));
    });
    container.appendChild(markEl);
  });
  return container;
}

/** Tokens covered by a rendered span, exact per token element. */
export function spanTokens(rendered: HTMLElement, kind: "subj" | "obj"): string[] {
  const tokens: string[] = [];
  rendered.querySelectorAll(`mark.span-${kind} span.tok`).forEach((el) => {
    tokens.push(el.textContent ?? "");
  });
  return tokens;
}
