import { createServer, type Server } from "node:http";
import { afterEach, describe, expect, it } from "vitest";

import { StateStream } from "../src/stream.js";
import type { StateEvent } from "../src/types.js";

function stateLine(epoch: number): string {
  const doc = {
    type: "state",
    session_id: "s1",
    epoch_index: epoch,
    emitted_at: Date.now() / 1000,
    t_s: epoch * 0.5 + 1,
    confusion: 0.25,
    label: "NON_CONTROL",
    reliable: true,
    mode: "PLAYING",
    segment: 0,
    advisories_used: 0,
    band_powers: { theta: 1 },
    policy: { theta_high: 0.8, theta_low: 0.6, dwell_epochs: 4 },
  };
  return JSON.stringify(doc) + "\n";
}

function listen(server: Server): Promise<number> {
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const addr = server.address();
      resolve(typeof addr === "object" && addr ? addr.port : 0);
    });
  });
}

describe("StateStream", () => {
  let servers: Server[] = [];
  let streams: StateStream[] = [];

  afterEach(() => {
    for (const s of streams) s.stop();
    for (const s of servers) s.close();
    servers = [];
    streams = [];
  });

  it("delivers states and reconnects after a drop", async () => {
    let connections = 0;
    const server = createServer((req, res) => {
      connections += 1;
      res.writeHead(200, { "Content-Type": "application/x-ndjson" });
      res.write(stateLine(connections * 10));
      res.write(stateLine(connections * 10 + 1));
      // end the response: client should treat it as a drop and retry
      setTimeout(() => res.end(), 30);
    });
    servers.push(server);
    const port = await listen(server);

    const got: StateEvent[] = [];
    const gaps: number[] = [];
    const stream = new StateStream(`http://127.0.0.1:${port}`, "s1", {
      onState: (ev) => got.push(ev),
      onGap: ({ retryInMs }) => gaps.push(retryInMs),
    });
    streams.push(stream);
    stream.start();

    await new Promise((r) => setTimeout(r, 1800));
    expect(connections).toBeGreaterThanOrEqual(2);
    expect(got.length).toBeGreaterThanOrEqual(4);
    expect(gaps.length).toBeGreaterThanOrEqual(1);
    expect(gaps[0]).toBe(1000); // healthy connection resets the schedule
  });

  it("backs off exponentially while the server is down", async () => {
    const stream = new StateStream("http://127.0.0.1:1", "s1", {
      onState: () => {},
    });
    streams.push(stream);
    stream.start();
    await new Promise((r) => setTimeout(r, 3300)); // fail, +1s fail, +2s fail
    expect(stream.retryLog.slice(0, 3)).toEqual([1000, 2000, 4000]);
  });

  it("surfaces 404 as a banner but keeps retrying", async () => {
    const server = createServer((req, res) => {
      res.writeHead(404, { "Content-Type": "application/json" });
      res.end(JSON.stringify({ error: "unknown session 's1'" }));
    });
    servers.push(server);
    const port = await listen(server);

    let missing = "";
    const stream = new StateStream(`http://127.0.0.1:${port}`, "s1", {
      onState: () => {},
      onMissing: (err) => (missing = err),
    });
    streams.push(stream);
    stream.start();
    await new Promise((r) => setTimeout(r, 300));
    expect(missing).toContain("unknown session");
    expect(stream.retryLog).toEqual([1000]); // retry scheduled, not dead
  });

  it("handles state lines split across chunks", async () => {
    const server = createServer((req, res) => {
      res.writeHead(200, { "Content-Type": "application/x-ndjson" });
      const line = stateLine(42);
      res.write(line.slice(0, 25));
      setTimeout(() => {
        res.write(line.slice(25));
        res.write(stateLine(43));
      }, 50);
    });
    servers.push(server);
    const port = await listen(server);

    const got: number[] = [];
    const stream = new StateStream(`http://127.0.0.1:${port}`, "s1", {
      onState: (ev) => got.push(ev.epoch_index),
    });
    streams.push(stream);
    stream.start();
    await new Promise((r) => setTimeout(r, 400));
    expect(got).toEqual([42, 43]);
  });
});
