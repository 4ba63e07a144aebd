/** Wire shapes produced by the session service. */

export interface PolicyValues {
  theta_high: number;
  theta_low: number;
  dwell_epochs: number;
  refractory_epochs?: number;
  max_advisories_per_segment?: number;
}

/** One per-epoch state document from GET /sessions/{id}/stream. */
export interface StateEvent {
  type: "state";
  session_id: string;
  epoch_index: number;
  emitted_at: number; // server wall clock, seconds
  t_s: number; // signal time of the window end, seconds
  confusion: number;
  label: "COMMAND" | "NON_CONTROL";
  reliable: boolean;
  mode: string;
  segment: number;
  advisories_used: number;
  band_powers: Record<string, number>;
  policy: PolicyValues;
}

export interface SessionInfo {
  session_id: string;
  user: string;
  lesson_id: string;
  run_mode: string;
  mode: string;
  segment: number;
  advisories_used: number;
  epoch: number;
  confusion: number;
  stream_attached: boolean;
  policy: PolicyValues;
}

export interface TransitionEvent {
  epoch_index: number;
  from_mode: string;
  to_mode: string;
  action: string;
  confusion: number;
  segment: number;
  advisory?: number;
  ref?: string;
}

export type Command =
  | { command: "pause" }
  | { command: "resume" }
  | { command: "inject_state"; label: "CLEAR" | "CONFUSED" | "REST" };
