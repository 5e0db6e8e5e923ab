/**
 * Annotator HIT flow: claim, answer five slots in sequence, review, submit
 * once atomically, then offer the next HIT.
 *
 * One idempotency key covers one submission attempt chain, so retrying after
 * a network failure replays the original submission instead of double
 * grading. Suspension and grading outcomes come from backend responses only.
 */

import { ApiClient, ApiError, newIdempotencyKey } from "./client.js";
import type { HitPayload } from "./types.js";
import { renderTaskView } from "./task-view.js";

export type HitPhase =
  | "idle"
  | "loading"
  | "task"
  | "review"
  | "submitting"
  | "retry"
  | "submitted"
  | "empty"
  | "locked"
  | "expired"
  | "error";

export interface HitFlowOptions {
  client: ApiClient;
  container: HTMLElement;
  onSessionExpired?: () => void;
  keyFactory?: () => string;
}

export class HitFlow {
  phase: HitPhase = "idle";
  hit: HitPayload | null = null;
  answers: Record<string, string> = {};
  slotIndex = 0;
  suspendedClusters: string[] = [];
  errorMessage = "";

  private idempotencyKey = "";
  private readonly client: ApiClient;
  private readonly container: HTMLElement;
  private readonly onSessionExpired: () => void;
  private readonly keyFactory: () => string;

  constructor(options: HitFlowOptions) {
    this.client = options.client;
    this.container = options.container;
    this.onSessionExpired = options.onSessionExpired ?? (() => {});
    this.keyFactory = options.keyFactory ?? newIdempotencyKey;
  }

  async start(): Promise<void> {
    this.phase = "loading";
    this.render();
    try {
      const next = await this.client.nextHit();
      this.suspendedClusters = next.suspended_clusters;
      if (next.hit === null) {
        this.phase = this.suspendedClusters.length > 0 ? "locked" : "empty";
      } else {
        this.hit = next.hit;
        this.answers = {};
        this.slotIndex = 0;
        this.idempotencyKey = this.keyFactory();
        this.phase = "task";
      }
    } catch (err) {
      this.handleFailure(err);
    }
    this.render();
  }

  /** Record the label for the current slot and advance. */
  confirmAnswer(label: string): void {
    const hit = this.hit;
    if (hit === null || this.phase !== "task") {
      return;
    }
    const slot = hit.slots[this.slotIndex];
    if (slot === undefined) {
      return;
    }
    this.answers[slot.sentence_id] = label;
    if (this.slotIndex + 1 < hit.slots.length) {
      this.slotIndex += 1;
    } else {
      this.phase = "review";
    }
    this.render();
  }

  /** Jump back to a slot from the review screen. */
  revisit(index: number): void {
    if (this.hit === null || index < 0 || index >= this.hit.slots.length) {
      return;
    }
    this.slotIndex = index;
    this.phase = "task";
    this.render();
  }

  /**
   * Single atomic submission of all answers. Safe against double clicks
   * (ignored while submitting) and against network failures (the retry
   * keeps the same idempotency key).
   */
  async submit(): Promise<void> {
    const hit = this.hit;
    if (hit === null || (this.phase !== "review" && this.phase !== "retry")) {
      return;
    }
    this.phase = "submitting";
    this.render();
    try {
      const result = await this.client.submitHit(hit.hit_id, this.answers, this.idempotencyKey);
      this.phase = result.suspended ? "locked" : "submitted";
    } catch (err) {
      this.handleFailure(err);
    }
    this.render();
  }

  private handleFailure(err: unknown): void {
    if (err instanceof ApiError) {
      if (err.sessionExpired) {
        this.phase = "expired";
        this.client.clearSession();
        this.onSessionExpired();
      } else {
        this.phase = "error";
        this.errorMessage = err.message;
      }
      return;
    }
    // network failure: the submission may or may not have landed, so offer
    // a retry that replays the exact same request
    this.phase = "retry";
    this.errorMessage = err instanceof Error ? err.message : String(err);
  }

  // -- rendering ----------------------------------------------------------

  render(): void {
    this.container.replaceChildren();
    switch (this.phase) {
      case "idle":
      case "loading":
        this.container.appendChild(this.message("loading", "Fetching your next HIT…"));
        break;
      case "empty":
        this.container.appendChild(
          this.message("empty", "No sentences are ready for you right now. Check back soon."),
        );
        break;
      case "locked":
        this.container.appendChild(this.lockScreen());
        break;
      case "expired":
        this.container.appendChild(
          this.message("expired", "Your session has expired. Please log in again."),
        );
        break;
      case "error":
        this.container.appendChild(this.message("error", this.errorMessage));
        break;
      case "task":
        this.renderTask();
        break;
      case "review":
        this.renderReview();
        break;
      case "submitting":
        this.container.appendChild(this.message("submitting", "Submitting your answers…"));
        break;
      case "retry":
        this.renderRetry();
        break;
      case "submitted":
        this.renderSubmitted();
        break;
    }
  }

  private message(kind: string, text: string): HTMLElement {
    const el = document.createElement("p");
    el.className = `flow-message flow-${kind}`;
    el.textContent = text;
    return el;
  }

  private lockScreen(): HTMLElement {
    const el = document.createElement("section");
    el.className = "lock-screen";
    const heading = document.createElement("h2");
    heading.textContent = "Annotation paused";
    el.appendChild(heading);
    const body = document.createElement("p");
    const clusters = this.suspendedClusters.join(", ");
    body.textContent =
      "Your recent answers did not meet the accuracy requirement, so this " +
      `task group is closed to you: ${clusters || "(reported by the server)"}. ` +
      "Completed work is still paid.";
    el.appendChild(body);
    return el;
  }

  private definitionsPanel(hit: HitPayload): HTMLElement {
    const panel = document.createElement("aside");
    panel.className = "definitions-panel";
    const heading = document.createElement("h3");
    heading.textContent = "Label definitions";
    panel.appendChild(heading);
    const list = document.createElement("dl");
    for (const choice of hit.choices) {
      const term = document.createElement("dt");
      term.textContent = choice.label;
      const detail = document.createElement("dd");
      detail.textContent = choice.definition;
      list.appendChild(term);
      list.appendChild(detail);
    }
    panel.appendChild(list);
    for (const [topic, text] of Object.entries(hit.guidelines)) {
      const note = document.createElement("p");
      note.className = "guideline";
      note.textContent = `${topic}: ${text}`;
      panel.appendChild(note);
    }
    return panel;
  }

  private renderTask(): void {
    const hit = this.hit;
    if (hit === null) {
      return;
    }
    const slot = hit.slots[this.slotIndex];
    if (slot === undefined) {
      return;
    }
    const layout = document.createElement("div");
    layout.className = "hit-layout";
    layout.appendChild(
      renderTaskView({
        slot,
        choices: hit.choices,
        index: this.slotIndex,
        total: hit.slots.length,
        selected: this.answers[slot.sentence_id],
        onConfirm: (label) => this.confirmAnswer(label),
      }),
    );
    layout.appendChild(this.definitionsPanel(hit));
    this.container.appendChild(layout);
  }

  private renderReview(): void {
    const hit = this.hit;
    if (hit === null) {
      return;
    }
    const review = document.createElement("section");
    review.className = "review";
    const heading = document.createElement("h2");
    heading.textContent = "Review your answers";
    review.appendChild(heading);
    const list = document.createElement("ol");
    hit.slots.forEach((slot, index) => {
      const item = document.createElement("li");
      const text = document.createElement("span");
      text.textContent = `${slot.text} — ${this.answers[slot.sentence_id] ?? "(unanswered)"}`;
      item.appendChild(text);
      const edit = document.createElement("button");
      edit.type = "button";
      edit.className = "edit";
      edit.textContent = "Edit";
      edit.addEventListener("click", () => this.revisit(index));
      item.appendChild(edit);
      list.appendChild(item);
    });
    review.appendChild(list);
    const submit = document.createElement("button");
    submit.type = "button";
    submit.className = "submit";
    submit.textContent = "Submit HIT";
    submit.addEventListener("click", () => {
      void this.submit();
    });
    review.appendChild(submit);
    this.container.appendChild(review);
  }

  private renderRetry(): void {
    const retry = document.createElement("section");
    retry.className = "retry";
    const body = document.createElement("p");
    body.textContent =
      `Submission did not reach the server (${this.errorMessage}). ` +
      "Retrying is safe: the server recognizes the original submission.";
    retry.appendChild(body);
    const button = document.createElement("button");
    button.type = "button";
    button.className = "retry-submit";
    button.textContent = "Retry submission";
    button.addEventListener("click", () => {
      void this.submit();
    });
    retry.appendChild(button);
    this.container.appendChild(retry);
  }

  private renderSubmitted(): void {
    const done = document.createElement("section");
    done.className = "submitted";
    const body = document.createElement("p");
    body.textContent = "Answers recorded. Thank you!";
    done.appendChild(body);
    const next = document.createElement("button");
    next.type = "button";
    next.className = "next-hit";
    next.textContent = "Next HIT";
    next.addEventListener("click", () => {
      void this.start();
    });
    done.appendChild(next);
    this.container.appendChild(done);
  }
}
