"""Compare the compiled and numpy SU(2) kernels.

    python benchmarks/bench_kernels.py [--sizes 1000,10000,100000] [--repeat 5]

Prints best-of-N wall time per call and the speed-up of the compiled backend,
then times one full interferometer propagation with each backend.
"""
import argparse
import sys
import timeit

import numpy as np

from glzs import kernels
from glzs.bloch import DOWN
from glzs.evolve import IntegratorConfig, final_state, segment_unitary
from glzs.schedule import GlzsParams, build_glzs


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def check_agreement(backends, w, psi):
    ref = None
    for name, impl in backends.items():
        out = (kernels.apply_rotations(w, psi, impl=impl),
               kernels.record_rotations(w, psi, 2, impl=impl),
               kernels.rotation_product(w, impl=impl))
        if ref is None:
            ref = out
            continue
        diff = max(float(np.abs(a - b).max()) for a, b in zip(ref, out))
        print(f"max |{name} - reference| = {diff:.2e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    psi = DOWN.array
    check_agreement(backends, rng.normal(scale=0.05, size=(1000, 3)), psi)

    ops = {
        "apply_rotations": lambda w, b: kernels.apply_rotations(w, psi, impl=b),
        "record_rotations": lambda w, b: kernels.record_rotations(w, psi, 2, impl=b),
        "rotation_product": lambda w, b: kernels.rotation_product(w, impl=b),
    }
    print(f"\n{'kernel':<18}{'rows':>9}" + "".join(f"{n + ' [ms]':>16}" for n in backends)
          + ("      speed-up" if len(backends) > 1 else ""))
    for n in (int(x) for x in args.sizes.split(",")):
        w = rng.normal(scale=0.05, size=(n, 3))
        for op, fn in ops.items():
            t = {name: best(lambda: fn(w, impl), args.repeat) for name, impl in backends.items()}
            row = f"{op:<18}{n:>9}" + "".join(f"{1e3 * t[k]:>16.3f}" for k in backends)
            if "cython" in t:
                row += f"{t['python'] / t['cython']:>13.1f}x"
            print(row)

    s = build_glzs(GlzsParams(phi_0=1.0))
    cfg = IntegratorConfig()
    print()
    saved = kernels._impl
    try:
        for name, impl in backends.items():
            kernels._impl = impl

            def run():
                segment_unitary.cache_clear()
                final_state(s, DOWN, cfg)

            print(f"full interferometer propagation, {name}: {1e3 * best(run, args.repeat):.1f} ms")
    finally:
        kernels._impl = saved
        segment_unitary.cache_clear()
    return 0


if __name__ == "__main__":
    sys.exit(main())
