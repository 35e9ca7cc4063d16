"""Time the IoU matrix kernels and a full evaluation under both backends.

    python benchmarks/bench_kernels.py [--n 300] [--repeat 5]

Each backend runs in its own interpreter because the JIT flag is read at
import time. The numba timings exclude the first (compiling) call.
"""

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path


def _best(fn, repeat):
    fn()  # warm-up, triggers compilation on the numba path
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(n, repeat):
    import numpy as np

    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
    from _fixtures import random_frames
    from kittieval._jit import backend_name
    from kittieval.geometry import bev_iou_matrix, box2d_overlap_matrix, box3d_iou_matrix
    from kittieval.metrics import evaluate

    rng = np.random.default_rng(0)
    corners = np.sort(rng.uniform(0, 1200, size=(2 * n, 2, 2)), axis=1)
    boxes2d = corners.transpose(0, 2, 1).reshape(2 * n, 4)
    bev = np.column_stack([rng.uniform(-20, 20, (2 * n, 2)), rng.uniform(0.5, 6, (2 * n, 2)),
                           rng.uniform(-3.2, 3.2, 2 * n)])
    box3d = np.column_stack([bev, rng.uniform(0, 2, 2 * n), rng.uniform(0.5, 3, 2 * n)])
    frames = random_frames(1, n_frames=200, max_gt=12)

    result = {
        "backend": backend_name(),
        "box2d_overlap_matrix": _best(lambda: box2d_overlap_matrix(boxes2d[:n], boxes2d[n:]), repeat),
        "bev_iou_matrix": _best(lambda: bev_iou_matrix(bev[:n], bev[n:]), repeat),
        "box3d_iou_matrix": _best(lambda: box3d_iou_matrix(box3d[:n], box3d[n:]), repeat),
        "evaluate (200 frames)": _best(lambda: evaluate(frames), max(1, repeat // 2)),
    }
    print(json.dumps(result))


def run_backend(disable, n, repeat):
    env = dict(os.environ, KITTIEVAL_DISABLE_JIT="1" if disable else "0")
    cmd = [sys.executable, __file__, "--worker", "--n", str(n), "--repeat", str(repeat)]
    out = subprocess.run(cmd, capture_output=True, text=True, env=env, check=True).stdout
    return json.loads(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300, help="boxes per side of each matrix")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.n, args.repeat)
        return

    fast = run_backend(False, args.n, args.repeat)
    slow = run_backend(True, args.n, args.repeat)
    print(f"{args.n}x{args.n} matrices, best of {args.repeat}")
    print(f"{'kernel':<24}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<24}{fast[key] * 1e3:>10.2f}ms{slow[key] * 1e3:>10.2f}ms{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
