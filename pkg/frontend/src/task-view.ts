/**
 * One HIT slot: highlighted sentence, single-select candidate list, and
 * progress within the 5-slot HIT.
 *
 * Every slot renders through this one code path with the same inputs shape,
 * so control slots are structurally indistinguishable from task slots. The
 * choice list is rendered exactly as the backend sent it: same options, same
 * order, nothing filtered or injected locally.
 */

import type { ChoicePayload, SlotPayload } from "./types.js";
import { renderSentence } from "./highlight.js";

export interface TaskViewOptions {
  slot: SlotPayload;
  choices: ChoicePayload[];
  index: number;
  total: number;
  selected?: string;
  onConfirm: (label: string) => void;
}

function choiceRow(
  choice: ChoicePayload,
  shortcut: number | null,
  checked: boolean,
): HTMLLabelElement {
  const row = document.createElement("label");
  row.className = "choice";
  const input = document.createElement("input");
  input.type = "radio";
  // one slot is on screen at a time, so the group name never collides;
  // a constant keeps every slot's DOM shape identical
  input.name = "answer";
  input.value = choice.label;
  input.checked = checked;
  row.appendChild(input);
  const text = document.createElement("span");
  text.className = "choice-label";
  text.textContent = shortcut === null ? choice.label : `${shortcut}. ${choice.label}`;
  text.title = choice.definition;
  row.appendChild(text);
  const definition = document.createElement("small");
  definition.className = "choice-definition";
  definition.textContent = choice.definition;
  row.appendChild(definition);
  return row;
}

/** Render a slot. Confirm fires via the button or the Enter key; number keys
 * 1-9 select choices, so the whole flow is keyboard operable. */
export function renderTaskView(options: TaskViewOptions): HTMLElement {
  const { slot, choices, index, total, onConfirm } = options;
  const view = document.createElement("section");
  view.className = "task-view";
  view.tabIndex = -1;

  const progress = document.createElement("header");
  progress.className = "task-progress";
  progress.textContent = `Sentence ${index + 1} of ${total}`;
  view.appendChild(progress);

  view.appendChild(renderSentence(slot));

  const pair = document.createElement("p");
  pair.className = "type-pair";
  pair.textContent = `${slot.subj_type} → ${slot.obj_type}`;
  view.appendChild(pair);

  const list = document.createElement("fieldset");
  list.className = "choice-list";
  choices.forEach((choice, i) => {
    const shortcut = i < 9 ? i + 1 : null;
    list.appendChild(choiceRow(choice, shortcut, options.selected === choice.label));
  });
  view.appendChild(list);

  const confirm = document.createElement("button");
  confirm.type = "button";
  confirm.className = "confirm";
  confirm.textContent = index + 1 < total ? "Next sentence" : "Review answers";
  view.appendChild(confirm);

  const selectedLabel = (): string | null => {
    const input = list.querySelector<HTMLInputElement>("input:checked");
    return input ? input.value : null;
  };

  confirm.addEventListener("click", () => {
    const label = selectedLabel();
    if (label !== null) {
      onConfirm(label);
    }
  });

  view.addEventListener("keydown", (event) => {
    if (event.key >= "1" && event.key <= "9") {
      const input = list.querySelectorAll<HTMLInputElement>("input")[Number(event.key) - 1];
      if (input !== undefined) {
        input.checked = true;
        event.preventDefault();
      }
    } else if (event.key === "Enter") {
      const label = selectedLabel();
      if (label !== null) {
        onConfirm(label);
        event.preventDefault();
      }
    }
  });

  return view;
}
