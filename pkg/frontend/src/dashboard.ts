/**
 * Admin dashboard: campaign progress, agreement statistics, suspensions,
 * cost meter, task-plan summary, and a difficulty-ranked review queue.
 *
 * Every number shown is taken verbatim from a gateway response. The only
 * client-side processing is formatting, so dashboard figures always equal
 * what the CLI reports for the same event log.
 */

import { ApiClient, ApiError } from "./client.js";
import type {
  AgreementResponse,
  CostResponse,
  DifficultyResponse,
  PlanResponse,
  ProgressResponse,
  SuspensionsResponse,
} from "./types.js";

export interface DashboardData {
  progress: ProgressResponse;
  agreement: AgreementResponse;
  suspensions: SuspensionsResponse;
  cost: CostResponse;
  difficulty: DifficultyResponse;
  plan: PlanResponse;
}

export interface DashboardOptions {
  client: ApiClient;
  container: HTMLElement;
  adminToken: string;
  /** How many review-queue rows to show. */
  queueSize?: number;
  /** Receives the patch JSONL on download; default saves a file. */
  saver?: (filename: string, text: string) => void;
}

function defaultSaver(filename: string, text: string): void {
  const blob = new Blob([text], { type: "application/jsonl" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export class Dashboard {
  data: DashboardData | null = null;
  errorMessage = "";

  private readonly client: ApiClient;
  private readonly container: HTMLElement;
  private readonly adminToken: string;
  private readonly queueSize: number;
  private readonly saver: (filename: string, text: string) => void;

  constructor(options: DashboardOptions) {
    this.client = options.client;
    this.container = options.container;
    this.adminToken = options.adminToken;
    this.queueSize = options.queueSize ?? 10;
    this.saver = options.saver ?? defaultSaver;
  }

  async load(): Promise<void> {
    const token = this.adminToken;
    try {
      const [progress, agreement, suspensions, cost, difficulty, plan] = await Promise.all([
        this.client.progress(token),
        this.client.agreement(token),
        this.client.suspensions(token),
        this.client.cost(token),
        this.client.difficulty(token),
        this.client.plan(token),
      ]);
      this.data = { progress, agreement, suspensions, cost, difficulty, plan };
    } catch (err) {
      this.data = null;
      this.errorMessage =
        err instanceof ApiError && err.status === 403
          ? "Not authorized: check the admin token."
          : err instanceof Error
            ? err.message
            : String(err);
    }
    this.render();
  }

  async downloadPatch(): Promise<string> {
    const text = await this.client.patch(this.adminToken);
    this.saver("revision-patch.jsonl", text);
    return text;
  }

  // -- rendering ----------------------------------------------------------

  render(): void {
    this.container.replaceChildren();
    if (this.data === null) {
      const el = document.createElement("p");
      el.className = "flow-message flow-error";
      el.textContent = this.errorMessage || "Loading…";
      this.container.appendChild(el);
      return;
    }
    const { progress, agreement, suspensions, cost, difficulty, plan } = this.data;
    const root = document.createElement("div");
    root.className = "dashboard";
    root.appendChild(this.metricCards(progress, agreement));
    root.appendChild(this.costCard(cost));
    root.appendChild(this.planCard(plan));
    root.appendChild(this.roundsTable(progress));
    root.appendChild(this.clustersTable(progress));
    root.appendChild(this.suspensionsTable(suspensions));
    root.appendChild(this.reviewQueue(difficulty));
    root.appendChild(this.patchButton());
    this.container.appendChild(root);
  }

  private metric(name: string, value: number | string | null): HTMLElement {
    const card = document.createElement("div");
    card.className = "card metric";
    const figure = document.createElement("div");
    figure.className = "metric-value";
    figure.dataset.metric = name;
    figure.textContent = value === null ? "—" : String(value);
    card.appendChild(figure);
    const label = document.createElement("div");
    label.className = "metric-label";
    label.textContent = name.replaceAll("_", " ");
    card.appendChild(label);
    return card;
  }

  private metricCards(progress: ProgressResponse, agreement: AgreementResponse): HTMLElement {
    const grid = document.createElement("section");
    grid.className = "metric-grid";
    grid.appendChild(this.metric("sentences", progress.sentences));
    grid.appendChild(this.metric("resolved", progress.resolved));
    grid.appendChild(this.metric("pending", progress.pending));
    grid.appendChild(this.metric("wrong_type_exhausted", progress.wrong_type_exhausted));
    grid.appendChild(this.metric("unresolvable", progress.unresolvable));
    grid.appendChild(this.metric("hits_issued", progress.hits_issued));
    grid.appendChild(this.metric("hits_open", progress.hits_open));
    grid.appendChild(this.metric("suspensions", progress.suspensions));
    grid.appendChild(this.metric("kappa", agreement.kappa));
    grid.appendChild(this.metric("agreement", agreement.agreement));
    grid.appendChild(this.metric("rated_items", agreement.items));
    if (agreement.reason !== undefined) {
      const note = document.createElement("p");
      note.className = "agreement-note";
      note.textContent = agreement.reason;
      grid.appendChild(note);
    }
    return grid;
  }

  private costCard(cost: CostResponse): HTMLElement {
    const card = document.createElement("section");
    card.className = "cost-meter";
    const heading = document.createElement("h3");
    heading.textContent = "Cost";
    card.appendChild(heading);
    card.appendChild(this.metric("cost_units", cost.cost_units));
    card.appendChild(this.metric("price_per_hit", cost.price_per_hit));
    card.appendChild(this.metric("cost_hits_issued", cost.hits_issued));
    return card;
  }

  private planCard(plan: PlanResponse): HTMLElement {
    const card = document.createElement("section");
    card.className = "plan-card";
    const heading = document.createElement("h3");
    heading.textContent = "Task plan";
    card.appendChild(heading);
    card.appendChild(this.metric("clusters", plan.clusters));
    card.appendChild(this.metric("type_pairs", plan.type_pairs));
    card.appendChild(this.metric("reduction_factor", plan.cost.reduction_factor));
    card.appendChild(this.metric("naive_worst_case_tasks", plan.cost.naive_worst_case_tasks));
    card.appendChild(
      this.metric("clustered_worst_case_tasks", plan.cost.clustered_worst_case_tasks),
    );
    return card;
  }

  private table(className: string, header: string[], rows: (string | number)[][]): HTMLElement {
    const table = document.createElement("table");
    table.className = className;
    const head = document.createElement("tr");
    for (const title of header) {
      const cell = document.createElement("th");
      cell.textContent = title;
      head.appendChild(cell);
    }
    table.appendChild(head);
    for (const row of rows) {
      const tr = document.createElement("tr");
      for (const value of row) {
        const cell = document.createElement("td");
        cell.textContent = String(value);
        tr.appendChild(cell);
      }
      table.appendChild(tr);
    }
    return table;
  }

  private roundsTable(progress: ProgressResponse): HTMLElement {
    const rows = Object.entries(progress.round_distribution).map(([round, count]) => [
      round,
      count,
    ]);
    return this.table("rounds", ["Round", "Sentences"], rows);
  }

  private clustersTable(progress: ProgressResponse): HTMLElement {
    const rows = Object.entries(progress.per_cluster).map(([name, bucket]) => [
      name,
      bucket.sentences,
      bucket.resolved,
      bucket.pending,
      bucket.wrong_type_exhausted,
      bucket.unresolvable,
    ]);
    return this.table(
      "clusters",
      ["Cluster", "Sentences", "Resolved", "Pending", "Wrong type", "Unresolvable"],
      rows,
    );
  }

  private suspensionsTable(suspensions: SuspensionsResponse): HTMLElement {
    const rows = suspensions.suspensions.map((row) => [
      row.annotator_id,
      row.cluster,
      row.correct,
      row.seen,
    ]);
    return this.table("suspensions", ["Annotator", "Cluster", "Correct", "Seen"], rows);
  }

  private reviewQueue(difficulty: DifficultyResponse): HTMLElement {
    const rows = difficulty.items
      .slice(0, this.queueSize)
      .map((row) => [row.sentence_id, row.disagreement]);
    return this.table("review-queue", ["Sentence", "Disagreement"], rows);
  }

  private patchButton(): HTMLElement {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "download-patch";
    button.textContent = "Download revision patch";
    button.addEventListener("click", () => {
      void this.downloadPatch();
    });
    return button;
  }
}
