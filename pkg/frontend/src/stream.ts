import { ExponentialBackoff } from "./backoff.js";
import { NdjsonParser } from "./ndjson.js";
import type { StateEvent } from "./types.js";

export interface StreamHandlers {
  onState: (ev: StateEvent) => void;
  /** Called when a connection is (re)established. */
  onConnect?: (attempt: number) => void;
  /** Called when the subscription drops and a retry is scheduled. */
  onGap?: (info: { error: string; retryInMs: number }) => void;
  /** The session does not exist (404): surfaced as an error banner. The
   * subscription keeps retrying, since a restarting server reports 404
   * until its sessions are re-created. */
  onMissing?: (error: string) => void;
}

function isStateEvent(doc: any): doc is StateEvent {
  return doc !== null && typeof doc === "object" && doc.type === "state";
}

/**
 * Subscription to GET /sessions/{id}/stream (NDJSON push).
 *
 * Hands every STATE document to the handler as soon as its line arrives and
 * reconnects after a drop with exponential backoff (1 s, x2, capped 30 s);
 * the backoff resets once a connection delivers data. A 404 raises the
 * error banner via onMissing but keeps the retry loop alive.
 */
export class StateStream {
  private stopped = false;
  private controller: AbortController | null = null;
  private timer: NodeJS.Timeout | null = null;
  readonly backoff = new ExponentialBackoff();
  /** Retry delays actually used, for diagnostics and tests. */
  readonly retryLog: number[] = [];

  constructor(
    readonly baseUrl: string,
    readonly sessionId: string,
    readonly handlers: StreamHandlers,
  ) {}

  start(): void {
    void this.connectLoop();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer) clearTimeout(this.timer);
    this.controller?.abort();
  }

  private async connectLoop(): Promise<void> {
    while (!this.stopped) {
      let delivered = false;
      try {
        this.controller = new AbortController();
        const url = `${this.baseUrl.replace(/\/$/, "")}/sessions/${this.sessionId}/stream`;
        const res = await fetch(url, { signal: this.controller.signal });
        if (res.status === 404) {
          this.handlers.onMissing?.(`unknown session ${this.sessionId}`);
          throw new Error(`unknown session ${this.sessionId}`);
        }
        if (!res.ok || !res.body) {
          throw new Error(`subscribe failed: HTTP ${res.status}`);
        }
        this.handlers.onConnect?.(this.backoff.attempts);
        const parser = new NdjsonParser();
        const decoder = new TextDecoder();
        for await (const chunk of res.body as unknown as AsyncIterable<Uint8Array>) {
          for (const doc of parser.feed(decoder.decode(chunk, { stream: true }))) {
            if (isStateEvent(doc)) {
              delivered = true;
              this.backoff.reset();
              this.handlers.onState(doc);
            }
          }
        }
        throw new Error("stream ended");
      } catch (err) {
        if (this.stopped) return;
        if (delivered) this.backoff.reset();
        const retryInMs = this.backoff.nextDelayMs();
        this.retryLog.push(retryInMs);
        this.handlers.onGap?.({ error: String(err), retryInMs });
        await this.sleep(retryInMs);
      }
    }
  }

  private sleep(ms: number): Promise<void> {
    return new Promise((resolve) => {
      this.timer = setTimeout(resolve, ms);
    });
  }
}
