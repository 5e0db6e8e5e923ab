/** Shared test helpers: fixture loading and a route-table fetch mock. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike } from "../src/client.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture<T>(relPath: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", relPath), "utf8")) as T;
}

export function fixtureText(relPath: string): string {
  return readFileSync(join(here, "fixtures", relPath), "utf8");
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
  headers: Record<string, string>;
}

export type RouteHandler =
  | unknown
  | ((call: RecordedCall) => { status?: number; body?: unknown; text?: string });

export interface MockBackend {
  fetchFn: FetchLike;
  calls: RecordedCall[];
}

/**
 * Fetch stand-in backed by a route table keyed as "METHOD /path". A handler
 * is either a static JSON body or a function returning {status, body|text}.
 * Throw a TypeError from a handler to model a network failure.
 */
export function mockBackend(routes: Record<string, RouteHandler>): MockBackend {
  const calls: RecordedCall[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";
    const call: RecordedCall = {
      method,
      path,
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
      headers: (init?.headers as Record<string, string>) ?? {},
    };
    calls.push(call);
    const handler = routes[`${method} ${path}`];
    if (handler === undefined) {
      return new Response(
        JSON.stringify({ detail: { code: "not_found", message: `no route ${method} ${path}` } }),
        { status: 404, headers: { "Content-Type": "application/json" } },
      );
    }
    const result = typeof handler === "function" ? (handler as CallableFunction)(call) : { body: handler };
    const status = result.status ?? 200;
    if (typeof result.text === "string") {
      return new Response(result.text, {
        status,
        headers: { "Content-Type": "text/plain; charset=utf-8" },
      });
    }
    return new Response(JSON.stringify(result.body ?? null), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

export function errorBody(code: string, message: string): { detail: { code: string; message: string } } {
  return { detail: { code, message } };
}
