"""Operator command line.

Subcommands: simulate (closed loop in process), calibrate (train a model and
derive thresholds), replay (verify a stored session reproduces its transition
log), serve (HTTP control plane + TCP stream plane), metrics (summarize a
data directory), stream (drive a live session over TCP from the synthetic
generator).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config, save_config
from .detect import LdaModel
from .pipeline import (default_calibration_timeline, replay_session,
                       run_calibration, run_simulation)
from .session import (Policy, RunMode, SELF_PACED, SYNCHRONOUS,
                      events_to_jsonl, load_lesson_file)
from .sigcore import SignalError
from .synthgen import SyntheticEEG, Timeline, CLEAR, timeline_from_json


def _load_or_default_config(path: str | None, seed: int | None) -> RunConfig:
    config = load_config(path) if path else RunConfig()
    if seed is not None:
        config = config.with_seed(seed)
    return config


def _load_timeline(path: str | None) -> Timeline:
    if path is None:
        return Timeline(((0.0, CLEAR),))
    return timeline_from_json(Path(path).read_text(encoding="utf-8"))


def _auto_artifacts(config: RunConfig, policy_path: str | None,
                    timeline=None) -> tuple[LdaModel, Policy]:
    """Load policy+model files, or calibrate deterministically in process."""
    if policy_path:
        policy = Policy.from_dict(json.loads(Path(policy_path).read_text()))
        if not policy.model_ref:
            raise SignalError(f"policy file {policy_path} has no model_ref")
        model_path = Path(policy_path).parent / policy.model_ref
        model = LdaModel.from_json(model_path.read_text(encoding="utf-8"))
        return model, policy
    result = run_calibration(config, timeline=timeline,
                             defaults=config.policy_defaults)
    return result.model, result.policy


def cmd_simulate(args) -> int:
    config = _load_or_default_config(args.config, args.seed)
    try:
        lesson = load_lesson_file(args.lesson)
    except FileNotFoundError:
        print(f"error: lesson file not found: {args.lesson}", file=sys.stderr)
        return 2
    timeline = _load_timeline(args.timeline)
    model, policy = _auto_artifacts(config, args.policy)
    run_mode = RunMode(kind=SYNCHRONOUS if args.synchronous else SELF_PACED,
                       cue_windows=tuple(tuple(w) for w in
                                         json.loads(args.cue_windows))
                       if args.cue_windows else ())

    out = run_simulation(config, timeline, lesson, model, policy, run_mode)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "events.jsonl").write_text(events_to_jsonl(out.events))
        (out_dir / "rows.jsonl").write_text(
            "".join(json.dumps(r) + "\n" for r in out.rows))
        (out_dir / "report.json").write_text(
            json.dumps(out.report.to_dict(), indent=2))
        (out_dir / "meta.json").write_text(json.dumps({
            "lesson_id": lesson.id, "policy": policy.to_dict(),
            "step_s": config.step_s, "run_mode": run_mode.kind,
            "seed": config.generator.seed,
        }, indent=2))
    if args.json:
        print(json.dumps(out.report.to_dict()))
    else:
        r = out.report
        lat = ", ".join(f"{x:.2f}s" for x in r.detection_latencies_s) or "n/a"
        print(f"epochs: {r.epochs}  pauses: {r.pauses}  "
              f"false pauses: {r.false_pauses}  advisories: {r.advisories_shown}")
        print(f"segments completed: {r.segments_completed}  "
              f"detection latency: {lat}  missed onsets: {r.missed_onsets}")
        print(f"real-time factor: {r.real_time_factor:.1f}x")
    return 0


def cmd_calibrate(args) -> int:
    config = _load_or_default_config(args.config, args.seed)
    timeline = (_load_timeline(args.timeline) if args.timeline
                else default_calibration_timeline())
    result = run_calibration(config, timeline=timeline,
                             duration_s=args.duration,
                             defaults=config.policy_defaults)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model_name = args.model_out or (out.stem + ".model.json")
    model_path = out.parent / model_name
    model_path.write_text(result.model.to_json(), encoding="utf-8")
    policy = result.policy
    policy_doc = policy.to_dict()
    policy_doc["model_ref"] = model_path.name
    out.write_text(json.dumps(policy_doc, indent=2), encoding="utf-8")
    info = {
        "theta_high": policy.theta_high,
        "theta_low": policy.theta_low,
        "epochs": result.n_epochs,
        "clear": result.n_clear,
        "confused": result.n_confused,
        "artifact_epochs": result.n_artifact,
        "training_accuracy": result.training_accuracy,
        "degenerate": policy.degenerate_calibration,
        "policy_path": str(out),
        "model_path": str(model_path),
    }
    if args.json:
        print(json.dumps(info))
    else:
        print(f"calibrated theta_high={policy.theta_high:.4g} "
              f"theta_low={policy.theta_low:.4g} "
              f"(training accuracy {result.training_accuracy:.3f}, "
              f"{result.n_epochs} epochs)")
        print(f"wrote {out} and {model_path}")
    return 0


def cmd_replay(args) -> int:
    base = Path(args.data_dir)
    session_dir = (base / "sessions" / args.session
                   if (base / "sessions").is_dir() else base / args.session)
    if args.session == "." or not session_dir.is_dir():
        session_dir = base if (base / "rows.jsonl").exists() else session_dir
    rows_path = session_dir / "rows.jsonl"
    events_path = session_dir / "events.jsonl"
    meta_path = session_dir / "meta.json"
    if not rows_path.exists():
        print(f"error: no rows.jsonl under {session_dir}", file=sys.stderr)
        return 2
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    rows = [json.loads(line) for line in rows_path.read_text().splitlines()]
    stored = events_path.read_text() if events_path.exists() else ""

    if args.lesson:
        lesson = load_lesson_file(args.lesson)
    else:
        lessons_dir = base / "lessons"
        lesson_file = lessons_dir / f"{meta.get('lesson_id')}.json"
        if not lesson_file.exists():
            print("error: lesson manifest not found; pass --lesson",
                  file=sys.stderr)
            return 2
        lesson = load_lesson_file(lesson_file)
    policy = Policy.from_dict(meta["policy"])
    run_mode = RunMode(kind=meta.get("run_mode", SELF_PACED),
                       cue_windows=tuple(tuple(w) for w in
                                         meta.get("cue_windows", [])))
    events = replay_session(rows, lesson, policy, run_mode,
                            step_s=meta.get("step_s", 0.5))
    replayed = events_to_jsonl(events)
    identical = replayed == stored
    if args.json:
        print(json.dumps({"identical": identical,
                          "events": len(events),
                          "rows": len(rows)}))
    else:
        print(f"replayed {len(rows)} rows -> {len(events)} events; "
              f"transition log {'matches' if identical else 'DIFFERS'}")
    return 0 if identical else 1


def cmd_serve(args) -> int:
    from .netserve.service import SessionService
    from .netserve.store import SessionStore

    config = _load_or_default_config(args.config, args.seed)
    model, policy = _auto_artifacts(config, args.policy)
    store = SessionStore(args.data_dir)
    if args.lesson:
        lesson = load_lesson_file(args.lesson)
        from .session import lesson_to_manifest
        store.put_lesson(lesson.id, lesson_to_manifest(lesson))
    service = SessionService(store, config, model, policy)
    host, port = _parse_addr(args.listen)
    tcp_host, tcp_port = _parse_addr(args.stream_listen) if args.stream_listen \
        else (host, port + 1 if port else 0)
    service.start((host, port), (tcp_host, tcp_port))
    print(json.dumps({"http": f"http://{host}:{service.http_port}",
                      "tcp": f"{tcp_host}:{service.tcp_port}",
                      "data_dir": str(args.data_dir)}), flush=True)
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_metrics(args) -> int:
    base = Path(args.data_dir)
    sessions_dir = base / "sessions"
    if not sessions_dir.is_dir():
        print(f"error: {sessions_dir} is not a directory", file=sys.stderr)
        return 2
    ids = ([args.session] if args.session
           else sorted(p.name for p in sessions_dir.iterdir() if p.is_dir()))
    summary = []
    for sid in ids:
        d = sessions_dir / sid
        rows = [json.loads(line) for line in
                (d / "rows.jsonl").read_text().splitlines()] \
            if (d / "rows.jsonl").exists() else []
        events = [json.loads(line) for line in
                  (d / "events.jsonl").read_text().splitlines()] \
            if (d / "events.jsonl").exists() else []
        epoch_rows = [r for r in rows if r.get("kind") == "epoch"]
        confusions = [r["confusion"] for r in epoch_rows]
        summary.append({
            "session_id": sid,
            "epochs": len(epoch_rows),
            "mean_confusion": (sum(confusions) / len(confusions)
                               if confusions else None),
            "pauses": sum(1 for e in events if e["action"] in
                          ("ShowAdvisory", "SwitchPresentation",
                           "FlagForInstructor", "OperatorPause")),
            "advisories": sum(1 for e in events if e["action"] == "ShowAdvisory"),
            "completed": any(e["to_mode"] == "COMPLETED" for e in events),
        })
    if args.json:
        print(json.dumps({"sessions": summary}))
    else:
        for s in summary:
            mean = f"{s['mean_confusion']:.3f}" if s["mean_confusion"] is not None else "n/a"
            print(f"{s['session_id']}: {s['epochs']} epochs, "
                  f"mean confusion {mean}, {s['pauses']} pauses, "
                  f"{s['advisories']} advisories, "
                  f"{'completed' if s['completed'] else 'incomplete'}")
    return 0


def cmd_stream(args) -> int:
    from .netserve.service import stream_client

    config = _load_or_default_config(args.config, args.seed)
    timeline = _load_timeline(args.timeline)
    gen = SyntheticEEG(config.generator, timeline)
    host, port = _parse_addr(args.connect)
    states = stream_client(host, port, args.session, gen,
                           step_samples=config.step_samples, rate=args.rate,
                           duration_s=args.duration)
    print(json.dumps({"states_received": states}))
    return 0


def cmd_init_config(args) -> int:
    config = _load_or_default_config(None, args.seed)
    save_config(config, args.out)
    print(f"wrote {args.out}")
    return 0


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroloop",
        description="Closed-loop adaptive learning engine on synthetic EEG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--seed", type=int, help="override the generator seed")
        p.add_argument("--json", action="store_true",
                       help="machine-readable report on stdout")

    p = sub.add_parser("simulate", help="run the closed loop in process")
    common(p)
    p.add_argument("--timeline", help="mental-state timeline JSON")
    p.add_argument("--lesson", required=True, help="lesson manifest JSON")
    p.add_argument("--policy", help="calibrated policy JSON (else auto-calibrate)")
    p.add_argument("--out-dir", help="write rows/events/report here")
    p.add_argument("--synchronous", action="store_true")
    p.add_argument("--cue-windows", help='JSON [[t0,t1],...] for synchronous mode')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="train a model and derive thresholds")
    common(p)
    p.add_argument("--timeline", help="labeled baseline timeline JSON")
    p.add_argument("--duration", type=float, default=200.0)
    p.add_argument("--out", required=True, help="policy JSON output path")
    p.add_argument("--model-out", help="model JSON filename (defaults beside --out)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="re-derive a stored session's transitions")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--lesson", help="lesson manifest (else from the data dir)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="start the session service")
    common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--listen", default="127.0.0.1:8750", help="HTTP host:port")
    p.add_argument("--stream-listen", help="TCP host:port (default HTTP port+1)")
    p.add_argument("--policy", help="calibrated policy JSON (else auto-calibrate)")
    p.add_argument("--lesson", help="preload this lesson manifest")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("metrics", help="summarize a session data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--session")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stream", help="drive a live session over TCP")
    common(p)
    p.add_argument("--connect", required=True, help="service TCP host:port")
    p.add_argument("--session", required=True)
    p.add_argument("--timeline")
    p.add_argument("--rate", type=float, default=1.0,
                   help="real-time pacing factor; 0 = as fast as possible")
    p.add_argument("--duration", type=float, help="seconds of signal to send")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("init-config", help="write the default run config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_init_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SignalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
