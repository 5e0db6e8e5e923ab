/**
 * Entry point: hash routing between the annotator flows and the admin
 * dashboard, plus the login screens that create sessions.
 *
 * The gateway origin defaults to same-origin and can be overridden with
 * ?api=<base-url> for development setups behind a different port.
 */

import { ApiClient, ApiError } from "./client.js";
import { HitFlow } from "./hit-flow.js";
import { QualificationFlow } from "./qualification.js";
import { Dashboard } from "./dashboard.js";

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return override ?? "";
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class App {
  private readonly client: ApiClient;
  private readonly root: HTMLElement;
  private annotatorId: string | null = null;

  constructor(root: HTMLElement, client?: ApiClient) {
    this.root = root;
    this.client = client ?? new ApiClient(apiBase());
  }

  start(): void {
    window.addEventListener("hashchange", () => this.route());
    this.route();
  }

  private route(): void {
    const hash = window.location.hash || "#/annotate";
    this.root.replaceChildren();
    if (hash.startsWith("#/admin")) {
      this.renderAdmin();
    } else if (hash.startsWith("#/qualify/")) {
      this.renderQualify(decodeURIComponent(hash.slice("#/qualify/".length)));
    } else {
      this.renderAnnotate();
    }
  }

  private nav(): HTMLElement {
    const nav = el("nav", "topnav");
    const annotate = el("a", undefined, "Annotate");
    annotate.setAttribute("href", "#/annotate");
    nav.appendChild(annotate);
    const admin = el("a", undefined, "Admin");
    admin.setAttribute("href", "#/admin");
    nav.appendChild(admin);
    if (this.annotatorId !== null) {
      nav.appendChild(el("span", "whoami", this.annotatorId));
    }
    return nav;
  }

  private loginForm(onLogin: () => void): HTMLElement {
    const form = el("form", "login");
    form.addEventListener("submit", (event) => event.preventDefault());
    form.appendChild(el("h2", undefined, "Annotator sign-in"));
    const input = el("input");
    input.type = "text";
    input.name = "annotator_id";
    input.placeholder = "annotator id";
    form.appendChild(input);
    const status = el("p", "login-status");
    const button = el("button", "login-submit", "Start session");
    button.type = "button";
    button.addEventListener("click", () => {
      void (async () => {
        try {
          const session = await this.client.openSession(input.value.trim());
          this.annotatorId = session.annotator_id;
          onLogin();
        } catch (err) {
          status.textContent =
            err instanceof ApiError ? err.message : "Could not reach the server.";
        }
      })();
    });
    form.appendChild(button);
    form.appendChild(status);
    return form;
  }

  private renderAnnotate(): void {
    this.root.appendChild(this.nav());
    const main = el("main");
    this.root.appendChild(main);
    if (!this.client.hasSession) {
      main.appendChild(this.loginForm(() => this.route()));
      return;
    }
    const flow = new HitFlow({
      client: this.client,
      container: main,
      onSessionExpired: () => {
        this.annotatorId = null;
        this.route();
      },
    });
    void flow.start();
  }

  private renderQualify(cluster: string): void {
    this.root.appendChild(this.nav());
    const main = el("main");
    this.root.appendChild(main);
    if (!this.client.hasSession) {
      main.appendChild(this.loginForm(() => this.route()));
      return;
    }
    const flow = new QualificationFlow({
      client: this.client,
      container: main,
      cluster,
      onSessionExpired: () => {
        this.annotatorId = null;
        this.route();
      },
    });
    void flow.start();
  }

  private renderAdmin(): void {
    this.root.appendChild(this.nav());
    const main = el("main");
    this.root.appendChild(main);
    const form = el("form", "admin-login");
    form.addEventListener("submit", (event) => event.preventDefault());
    form.appendChild(el("h2", undefined, "Campaign dashboard"));
    const input = el("input");
    input.type = "password";
    input.name = "admin_token";
    input.placeholder = "admin token";
    form.appendChild(input);
    const button = el("button", "admin-submit", "Open dashboard");
    button.type = "button";
    form.appendChild(button);
    const panel = el("section", "dashboard-panel");
    main.appendChild(form);
    main.appendChild(panel);
    button.addEventListener("click", () => {
      const dashboard = new Dashboard({
        client: this.client,
        container: panel,
        adminToken: input.value.trim(),
      });
      void dashboard.load();
    });
  }
}

const mount = document.getElementById("app");
if (mount !== null) {
  new App(mount).start();
}
