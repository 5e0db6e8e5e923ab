/**
 * Qualification flow for one super-cluster: definitions first, then the
 * questions, one submission, pass/fail screen per the backend's verdict.
 *
 * Regrading is an overwrite server side, so resubmitting identical answers
 * after a network failure cannot change the outcome.
 */

import { ApiClient, ApiError } from "./client.js";
import type { QualificationPayload } from "./types.js";
import { renderSentence } from "./highlight.js";

export type QualificationPhase =
  | "idle"
  | "loading"
  | "form"
  | "submitting"
  | "retry"
  | "passed"
  | "failed"
  | "expired"
  | "error";

export interface QualificationFlowOptions {
  client: ApiClient;
  container: HTMLElement;
  cluster: string;
  onSessionExpired?: () => void;
}

export class QualificationFlow {
  phase: QualificationPhase = "idle";
  payload: QualificationPayload | null = null;
  answers: Record<string, string> = {};
  errorMessage = "";

  private readonly client: ApiClient;
  private readonly container: HTMLElement;
  private readonly cluster: string;
  private readonly onSessionExpired: () => void;

  constructor(options: QualificationFlowOptions) {
    this.client = options.client;
    this.container = options.container;
    this.cluster = options.cluster;
    this.onSessionExpired = options.onSessionExpired ?? (() => {});
  }

  async start(): Promise<void> {
    this.phase = "loading";
    this.render();
    try {
      this.payload = await this.client.fetchQualification(this.cluster);
      this.answers = {};
      this.phase = "form";
    } catch (err) {
      this.handleFailure(err, "error");
    }
    this.render();
  }

  setAnswer(questionId: string, label: string): void {
    this.answers[questionId] = label;
  }

  get complete(): boolean {
    const payload = this.payload;
    if (payload === null) {
      return false;
    }
    return payload.questions.every((q) => this.answers[q.sentence_id] !== undefined);
  }

  async submit(): Promise<void> {
    if (this.payload === null || (this.phase !== "form" && this.phase !== "retry")) {
      return;
    }
    if (!this.complete) {
      return;
    }
    this.phase = "submitting";
    this.render();
    try {
      const graded = await this.client.submitQualification(this.cluster, this.answers);
      this.phase = graded.result === "passed" ? "passed" : "failed";
    } catch (err) {
      this.handleFailure(err, "retry");
    }
    this.render();
  }

  private handleFailure(err: unknown, networkPhase: QualificationPhase): void {
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
    this.phase = networkPhase;
    this.errorMessage = err instanceof Error ? err.message : String(err);
  }

  // -- rendering ----------------------------------------------------------

  render(): void {
    this.container.replaceChildren();
    switch (this.phase) {
      case "idle":
      case "loading":
        this.container.appendChild(this.message("loading", "Loading the qualification test…"));
        break;
      case "form":
        this.renderForm();
        break;
      case "submitting":
        this.container.appendChild(this.message("submitting", "Grading…"));
        break;
      case "retry":
        this.renderRetry();
        break;
      case "passed":
        this.renderPassed();
        break;
      case "failed":
        this.renderFailed();
        break;
      case "expired":
        this.container.appendChild(
          this.message("expired", "Your session has expired. Please log in again."),
        );
        break;
      case "error":
        this.container.appendChild(this.message("error", this.errorMessage));
        break;
    }
  }

  private message(kind: string, text: string): HTMLElement {
    const el = document.createElement("p");
    el.className = `flow-message flow-${kind}`;
    el.textContent = text;
    return el;
  }

  private renderForm(): void {
    const payload = this.payload;
    if (payload === null) {
      return;
    }
    const form = document.createElement("form");
    form.className = "qualification";
    form.addEventListener("submit", (event) => event.preventDefault());

    // definitions always come before the questions
    const definitions = document.createElement("section");
    definitions.className = "definitions";
    const heading = document.createElement("h2");
    heading.textContent = `Relation definitions: ${payload.cluster}`;
    definitions.appendChild(heading);
    const list = document.createElement("dl");
    for (const [label, text] of Object.entries(payload.definitions)) {
      const term = document.createElement("dt");
      term.textContent = label;
      const detail = document.createElement("dd");
      detail.textContent = text;
      list.appendChild(term);
      list.appendChild(detail);
    }
    definitions.appendChild(list);
    for (const [topic, text] of Object.entries(payload.guidelines)) {
      const note = document.createElement("p");
      note.className = "guideline";
      note.textContent = `${topic}: ${text}`;
      definitions.appendChild(note);
    }
    form.appendChild(definitions);

    const questions = document.createElement("section");
    questions.className = "questions";
    payload.questions.forEach((question, index) => {
      const block = document.createElement("fieldset");
      block.className = "question";
      const legend = document.createElement("legend");
      legend.textContent = `Question ${index + 1} of ${payload.questions.length}`;
      block.appendChild(legend);
      block.appendChild(renderSentence(question));
      for (const label of question.choices) {
        const row = document.createElement("label");
        row.className = "choice";
        const input = document.createElement("input");
        input.type = "radio";
        input.name = `q-${question.sentence_id}`;
        input.value = label;
        input.addEventListener("change", () => this.setAnswer(question.sentence_id, label));
        row.appendChild(input);
        const text = document.createElement("span");
        text.className = "choice-label";
        text.textContent = label;
        row.appendChild(text);
        block.appendChild(row);
      }
      questions.appendChild(block);
    });
    form.appendChild(questions);

    const submit = document.createElement("button");
    submit.type = "button";
    submit.className = "submit";
    submit.textContent = "Submit answers";
    submit.addEventListener("click", () => {
      void this.submit();
    });
    form.appendChild(submit);
    this.container.appendChild(form);
  }

  private renderRetry(): void {
    const retry = document.createElement("section");
    retry.className = "retry";
    const body = document.createElement("p");
    body.textContent =
      `Submission did not reach the server (${this.errorMessage}). ` +
      "Retrying resubmits the same answers and cannot be graded twice differently.";
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

  private renderPassed(): void {
    const el = document.createElement("section");
    el.className = "qualification-passed";
    const heading = document.createElement("h2");
    heading.textContent = "Qualification passed";
    el.appendChild(heading);
    const body = document.createElement("p");
    body.textContent = `You can now annotate sentences in ${this.cluster}.`;
    el.appendChild(body);
    this.container.appendChild(el);
  }

  private renderFailed(): void {
    const el = document.createElement("section");
    el.className = "qualification-failed";
    const heading = document.createElement("h2");
    heading.textContent = "Qualification not passed";
    el.appendChild(heading);
    const body = document.createElement("p");
    body.textContent =
      "A perfect score is required to qualify. Review the definitions and " +
      "retake the test whenever you are ready.";
    el.appendChild(body);
    const retake = document.createElement("button");
    retake.type = "button";
    retake.className = "retake";
    retake.textContent = "Retake test";
    retake.addEventListener("click", () => {
      void this.start();
    });
    el.appendChild(retake);
    this.container.appendChild(el);
  }
}
