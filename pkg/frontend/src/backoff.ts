/** Exponential reconnect backoff: 1 s initial, doubling, capped at 30 s. */
export class ExponentialBackoff {
  private attempt = 0;

  constructor(
    readonly initialMs = 1000,
    readonly factor = 2,
    readonly capMs = 30_000,
  ) {}

  /** Delay to wait before the next attempt, advancing the schedule. */
  nextDelayMs(): number {
    const delay = Math.min(this.initialMs * this.factor ** this.attempt, this.capMs);
    this.attempt += 1;
    return delay;
  }

  /** Call after a successful (re)connect. */
  reset(): void {
    this.attempt = 0;
  }

  get attempts(): number {
    return this.attempt;
  }
}
