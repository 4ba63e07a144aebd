#!/usr/bin/env node
/**
 * Operator console for live sessions.
 *
 *   neuroloop-console watch      --server URL --session ID
 *   neuroloop-console create     --server URL --lesson ID [--user NAME] [--synthetic [--rate X]]
 *   neuroloop-console set-policy --server URL --session ID --theta-high X [--theta-low Y] [--dwell N]
 *   neuroloop-console inject     --server URL --session ID --label CONFUSED
 *   neuroloop-console pause|resume --server URL --session ID
 *   neuroloop-console events     --server URL --session ID
 */

import { ApiError, ControlClient } from "./api.js";
import { renderDashboard } from "./render.js";
import { StateStream } from "./stream.js";
import { LiveView } from "./view.js";

function parseArgs(argv: string[]): { command: string; flags: Map<string, string> } {
  const [command, ...rest] = argv;
  const flags = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 1) {
    const arg = rest[i];
    if (!arg.startsWith("--")) continue;
    const next = rest[i + 1];
    if (next !== undefined && !next.startsWith("--")) {
      flags.set(arg.slice(2), next);
      i += 1;
    } else {
      flags.set(arg.slice(2), "true");
    }
  }
  return { command: command ?? "help", flags };
}

function need(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (!value) {
    console.error(`error: --${name} is required`);
    process.exit(2);
  }
  return value;
}

async function watch(client: ControlClient, sessionId: string): Promise<void> {
  const view = new LiveView();
  const stream = new StateStream(client.baseUrl, sessionId, {
    onState: (ev) => view.applyState(ev),
    onGap: ({ error, retryInMs }) =>
      view.applyGap(`${error} - retrying in ${(retryInMs / 1000).toFixed(0)}s`),
    onMissing: (error) => view.applyFatal(error),
  });
  stream.start();
  const redraw = setInterval(() => {
    process.stdout.write("\x1b[2J\x1b[H" + renderDashboard(view) + "\n");
  }, 250);
  process.on("SIGINT", () => {
    clearInterval(redraw);
    stream.stop();
    process.exit(0);
  });
}

async function main(): Promise<void> {
  const { command, flags } = parseArgs(process.argv.slice(2));
  if (command === "help" || command === "--help") {
    console.log("commands: watch, create, set-policy, inject, pause, resume, events");
    return;
  }
  const client = new ControlClient(need(flags, "server"));
  try {
    switch (command) {
      case "watch":
        await watch(client, need(flags, "session"));
        return; // runs until SIGINT
      case "create": {
        const body: Parameters<ControlClient["createSession"]>[0] = {
          user: flags.get("user") ?? "operator",
          lesson_id: need(flags, "lesson"),
        };
        if (flags.has("synthetic")) {
          body.source = { type: "synthetic", rate: Number(flags.get("rate") ?? "1") };
        }
        console.log(JSON.stringify(await client.createSession(body)));
        break;
      }
      case "set-policy": {
        const policy: Record<string, number> = {
          theta_high: Number(need(flags, "theta-high")),
        };
        if (flags.has("theta-low")) policy.theta_low = Number(flags.get("theta-low"));
        if (flags.has("dwell")) policy.dwell_epochs = Number(flags.get("dwell"));
        const ack = await client.setPolicy(need(flags, "session"), policy);
        console.log(JSON.stringify(ack));
        break;
      }
      case "inject": {
        const label = need(flags, "label") as "CLEAR" | "CONFUSED" | "REST";
        const ack = await client.sendCommand(need(flags, "session"), {
          command: "inject_state",
          label,
        });
        console.log(JSON.stringify(ack));
        break;
      }
      case "pause":
      case "resume": {
        const ack = await client.sendCommand(need(flags, "session"), { command });
        console.log(JSON.stringify(ack));
        break;
      }
      case "events": {
        const doc = await client.getEvents(need(flags, "session"));
        for (const ev of doc.events) console.log(JSON.stringify(ev));
        break;
      }
      default:
        console.error(`error: unknown command ${command}`);
        process.exit(2);
    }
  } catch (err) {
    if (err instanceof ApiError) {
      console.error(`error: ${err.status} ${err.message}`);
      process.exit(1);
    }
    throw err;
  }
}

void main();
