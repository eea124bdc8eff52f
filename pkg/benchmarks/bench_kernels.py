"""Compare the compiled kernels with the NumPy fallback.

Micro-benchmarks call both backends directly. The end-to-end rows run a
simulation and a conv-network training epoch in a subprocess per backend,
since the backend is fixed at import time.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from nctmc import _pykernels

try:
    from nctmc import _ckernels
except ImportError:
    _ckernels = None

END_TO_END = r"""
import json, time
import numpy as np
from nctmc import BACKEND, nn
from nctmc.experiments.truth import TemperatureCRNTruth, temperature_crn_network
from nctmc.likelihood import CompressedData, group_transitions
from nctmc.models import build_neural
from nctmc.ssa import ConstantCovariates, SimulationConfig, simulate

net = temperature_crn_network()
t0 = time.perf_counter()
trajs = [simulate(net, TemperatureCRNTruth(), SimulationConfig((2, 2), seed=i, max_transitions=150,
                                                               schedule=ConstantCovariates((273.0,))))
         for i in range(40)]
sim = time.perf_counter() - t0
ds = group_transitions(trajs, net)
data = CompressedData.from_grouped(ds)
model = build_neural(nn.conv_net(), ds, seed=0)
t0 = time.perf_counter()
for _ in range(5):
    loss = data.loss_graph(model, {k: nn.Tensor(v, requires_grad=True) for k, v in model.params.items()})
    loss.backward()
train = (time.perf_counter() - t0) / 5
print(json.dumps({"backend": BACKEND, "simulate_40x150": sim, "conv_epoch": train}))
"""


def best(fn, number, repeat):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def micro(repeat):
    rng = np.random.default_rng(0)
    alpha = rng.uniform(0.1, 2.0, 9)
    x = rng.normal(size=(512, 1, 96))
    w = rng.normal(size=(10, 1, 4))
    gy = rng.normal(size=(512, 10, 93))
    cases = {
        "select_event (9 classes)": lambda k: (lambda: k.select_event(alpha, 0.3, 0.7), 20000),
        "conv1d forward (512x1x96, 10x4)": lambda k: (lambda: k.conv1d_forward(x, w), 20),
        "conv1d backward": lambda k: (lambda: k.conv1d_backward(gy, x, w), 20),
    }
    rows = []
    for name, make in cases.items():
        fn, number = make(_pykernels)
        py = best(fn, number, repeat)
        c = best(*make(_ckernels), repeat=repeat) if _ckernels else float("nan")
        rows.append((name, py, c))
    return rows


def end_to_end():
    out = {}
    for label, env in (("numpy", {"NCTMC_PURE_PYTHON": "1"}), ("compiled", {})):
        e = {k: v for k, v in os.environ.items() if k != "NCTMC_PURE_PYTHON"}
        e.update(env)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=e, capture_output=True, text=True, check=True)
        out[label] = json.loads(res.stdout)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the NumPy column is meaningful")
    print(f"{'kernel':<34}{'numpy':>12}{'compiled':>12}{'speedup':>10}")
    for name, py, c in micro(args.repeat):
        print(f"{name:<34}{py * 1e6:>10.1f}us{c * 1e6:>10.1f}us{py / c:>9.1f}x")
    if not args.skip_end_to_end:
        res = end_to_end()
        if res["compiled"]["backend"] == res["numpy"]["backend"]:
            print("note: both subprocesses used the same backend")
        for key, label in (("simulate_40x150", "simulate 40 x 150 transitions"), ("conv_epoch", "conv net loss + grad")):
            py, c = res["numpy"][key], res["compiled"][key]
            print(f"{label:<34}{py * 1e3:>10.1f}ms{c * 1e3:>10.1f}ms{py / c:>9.1f}x")


if __name__ == "__main__":
    main()
