"""Time the numba kernels against the numpy fallback and check they agree.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from shepherd.heuristic import HeuristicParams
from shepherd.kernels import _numba, _numpy
from shepherd.sim import SimParams, episode_streams, sample_initial


def best_of(fn, repeat):
    fn()  # warm-up, also triggers numba compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(params):
    p = params
    streams = episode_streams(0)
    state = sample_initial(p, streams["init"])
    noise = streams["noise"].standard_normal((3000, p.num_targets, 2))
    gain = p.dt * p.repulsion_gain
    hp = HeuristicParams()

    def drift(mod):
        return lambda: mod.advance_targets(state.targets, state.herders, noise[0], gain, p.repulsion_range,
                                           p.noise_scale, p.arena_half_width)

    def episode(mod):
        return lambda: mod.heuristic_episode(state.herders, state.targets, noise, p.arena_half_width,
                                             p.herder_max_speed, gain, p.repulsion_range, p.dt, p.noise_scale,
                                             hp.standoff_for(p), hp.gain, p.buffered_radius, True, 200, 3000)

    return {"advance_targets": drift, "heuristic_episode": episode}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    for n, m in ((1, 1), (2, 5), (10, 100)):
        params = SimParams(num_herders=n, num_targets=m)
        for name, make in cases(params).items():
            a, b = make(_numba)(), make(_numpy)()
            if isinstance(a, np.ndarray):
                a, b = (a,), (b,)
            same = all(np.array_equal(x, y) for x, y in zip(a, b))
            t_nb = best_of(make(_numba), args.repeat)
            t_np = best_of(make(_numpy), args.repeat)
            print(f"{n:>2}v{m:<3} {name:<18} numba {t_nb * 1e3:9.3f} ms  numpy {t_np * 1e3:9.3f} ms  "
                  f"speedup {t_np / t_nb:6.1f}x  identical={same}")


if __name__ == "__main__":
    main()
