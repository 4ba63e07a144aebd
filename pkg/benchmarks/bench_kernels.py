#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot loops (streaming biquad cascade, Burg recursion) on the
default pipeline geometry (8 channels at 250 Hz, 5 sections, order 6), plus
one full pipeline epoch end to end under each backend.

Run:  python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, repeat=200):
    best = float("inf")
    for _ in range(5):
        fn(*args)  # warm-up
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_times(impl):
    rng = np.random.default_rng(0)
    from neuroloop.preprocess import design_bandpass, design_notch

    notch = design_notch(50.0, 30.0, 250.0).sos
    bp = design_bandpass(4, 1.0, 45.0, 250.0).sos
    sos = np.vstack([notch, bp])
    x = rng.normal(size=(8, 125))  # one 0.5 s block
    zi = np.zeros((8, sos.shape[0], 2))
    t_sos = bench(lambda: impl.sosfilt_stream(sos, x, zi))

    sig = rng.normal(size=250)
    t_burg = bench(lambda: impl.burg(sig, 6))
    return t_sos, t_burg


def pipeline_time():
    from neuroloop.config import RunConfig
    from neuroloop.pipeline import StreamPipeline, run_calibration
    from neuroloop.synthgen import CLEAR, SyntheticEEG, Timeline

    config = RunConfig()
    cal = run_calibration(config, duration_s=60.0)
    pipe = StreamPipeline(config, cal.model, cal.policy)
    gen = SyntheticEEG(config.generator, Timeline(((0.0, CLEAR),)))
    blocks = [gen.next_block(config.step_samples) for _ in range(64)]
    for b in blocks[:4]:
        pipe.process_block(b)
    epochs = 0
    t0 = time.perf_counter()
    for b in blocks[4:]:
        epochs += len(pipe.process_block(b))
    return (time.perf_counter() - t0) / epochs


def main():
    if os.environ.get("_BENCH_CHILD"):
        from neuroloop import KERNEL_BACKEND
        from neuroloop import _kernels
        t_sos, t_burg = kernel_times(_kernels)
        t_pipe = pipeline_time()
        print(f"{KERNEL_BACKEND} {t_sos:.6e} {t_burg:.6e} {t_pipe:.6e}")
        return

    rows = {}
    for env_val, label in (("", "compiled"), ("1", "python")):
        env = dict(os.environ, _BENCH_CHILD="1")
        if env_val:
            env["NEUROLOOP_PURE_PYTHON"] = env_val
        out = subprocess.run([sys.executable, __file__], env=env,
                             capture_output=True, text=True, check=True)
        backend, t_sos, t_burg, t_pipe = out.stdout.split()[-4:]
        rows[label] = (backend, float(t_sos), float(t_burg), float(t_pipe))

    print(f"{'':14s}{'sosfilt 8ch x 0.5s':>20s}{'burg n=250 p=6':>18s}"
          f"{'pipeline epoch':>17s}")
    for label in ("compiled", "python"):
        backend, t_sos, t_burg, t_pipe = rows[label]
        print(f"{label:14s}{t_sos * 1e6:>17.1f} us{t_burg * 1e6:>15.1f} us"
              f"{t_pipe * 1e3:>14.2f} ms")
    c, p = rows["compiled"], rows["python"]
    if c[0] == "c":
        print(f"{'speedup':14s}{p[1] / c[1]:>18.1f}x{p[2] / c[2]:>16.1f}x"
              f"{p[3] / c[3]:>15.1f}x")
    else:
        print("compiled backend unavailable; both rows ran the fallback")


if __name__ == "__main__":
    main()
