/** Incremental newline-delimited JSON splitter for streamed chunks. */
export class NdjsonParser {
  private buffer = "";

  /** Feed a chunk; returns every complete parsed line. Malformed lines are
   * skipped (the stream may resume mid-line after a network drop). */
  feed(chunk: string): unknown[] {
    this.buffer += chunk;
    const out: unknown[] = [];
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (!line) continue;
      try {
        out.push(JSON.parse(line));
      } catch {
        // torn line; drop it
      }
    }
    return out;
  }

  get pending(): string {
    return this.buffer;
  }
}
