import type { LiveView, Trace } from "./view.js";

const BARS = " ▁▂▃▄▅▆▇█";

/** Unicode sparkline of the last `width` trace points. */
export function sparkline(trace: Trace, width = 60): string {
  const values = trace.values().slice(-width);
  if (values.length === 0) return "(no data)";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  return values
    .map((v) => BARS[Math.min(8, Math.round(((v - lo) / span) * 8))])
    .join("");
}

function fmt(x: number): string {
  if (x === 0) return "0";
  const abs = Math.abs(x);
  if (abs >= 0.01 && abs < 10_000) return x.toFixed(3);
  return x.toExponential(2);
}

/** One full console frame for the watch loop. */
export function renderDashboard(view: LiveView, width = 60): string {
  const lines: string[] = [];
  const s = view.lastState;
  const status = view.status.toUpperCase();
  lines.push(`── session ${s?.session_id ?? "?"} ── ${status} ──`);
  if (view.errorBanner) {
    lines.push(`!! ${view.errorBanner}`);
  }
  if (s) {
    lines.push(
      `epoch ${s.epoch_index}  t=${s.t_s.toFixed(1)}s  mode=${s.mode}` +
        `  segment=${s.segment}  advisories=${s.advisories_used}` +
        (s.reliable ? "" : "  [artifact]"),
    );
    lines.push(`confusion ${fmt(s.confusion)}  label=${s.label}`);
  }
  if (view.policy) {
    const p = view.policy;
    lines.push(
      `policy: high=${fmt(p.theta_high)} low=${fmt(p.theta_low)} dwell=${p.dwell_epochs}`,
    );
  }
  lines.push(`confusion  ${sparkline(view.confusion, width)}`);
  for (const [band, trace] of view.bandPower) {
    const latest = trace.latest ? fmt(trace.latest.value) : "-";
    lines.push(`${band.padEnd(10)} ${sparkline(trace, width)} ${latest} uV^2`);
  }
  if (view.confusion.gaps.length > 0) {
    lines.push(`gaps after epochs: ${view.confusion.gaps.join(", ")}`);
  }
  return lines.join("\n");
}
