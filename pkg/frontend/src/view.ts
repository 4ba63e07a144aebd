import type { PolicyValues, StateEvent } from "./types.js";

export interface TracePoint {
  epoch: number;
  value: number;
}

/** Rolling trace bounded to the last N points; gaps are marked, not filled. */
export class Trace {
  readonly points: TracePoint[] = [];
  readonly gaps: number[] = []; // epoch indices right before a gap

  constructor(readonly capacity: number) {}

  push(epoch: number, value: number): void {
    this.points.push({ epoch, value });
    if (this.points.length > this.capacity) {
      this.points.splice(0, this.points.length - this.capacity);
    }
  }

  markGap(): void {
    const last = this.points[this.points.length - 1];
    if (last && this.gaps[this.gaps.length - 1] !== last.epoch) {
      this.gaps.push(last.epoch);
    }
  }

  get latest(): TracePoint | undefined {
    return this.points[this.points.length - 1];
  }

  values(): number[] {
    return this.points.map((p) => p.value);
  }
}

export type ConnectionStatus = "connecting" | "live" | "reconnecting" | "error";

/**
 * The console's model of one session: rolling confusion and per-band power
 * traces plus the latest mode/segment/policy. Every number held here came
 * from a received STATE document or an acknowledged control-plane response;
 * nothing is recomputed client-side.
 */
export class LiveView {
  static readonly DEFAULT_CAPACITY = 600; // 5 min of epochs at 0.5 s steps

  readonly confusion: Trace;
  readonly bandPower = new Map<string, Trace>();
  lastState: StateEvent | null = null;
  policy: PolicyValues | null = null;
  status: ConnectionStatus = "connecting";
  errorBanner: string | null = null;
  renderedAt = 0; // ms timestamp of the last applied state

  constructor(readonly capacity = LiveView.DEFAULT_CAPACITY) {
    this.confusion = new Trace(capacity);
  }

  applyState(ev: StateEvent): void {
    this.lastState = ev;
    this.policy = ev.policy;
    this.status = "live";
    this.errorBanner = null;
    this.confusion.push(ev.epoch_index, ev.confusion);
    for (const [band, power] of Object.entries(ev.band_powers)) {
      let trace = this.bandPower.get(band);
      if (!trace) {
        trace = new Trace(this.capacity);
        this.bandPower.set(band, trace);
      }
      trace.push(ev.epoch_index, power);
    }
    this.renderedAt = Date.now();
  }

  applyGap(error: string): void {
    this.status = "reconnecting";
    this.errorBanner = error;
    this.confusion.markGap();
    for (const trace of this.bandPower.values()) trace.markGap();
  }

  applyFatal(error: string): void {
    this.status = "error";
    this.errorBanner = error;
  }

  /** Echo of an acknowledged set_policy response. */
  applyPolicyAck(policy: PolicyValues): void {
    this.policy = policy;
  }
}
