"""Smoke test for the `hrl` extension module.

Build and install first, e.g. `pip install --no-build-isolation ./crates/python`
or `maturin develop -m crates/python/Cargo.toml`, then run this script.
"""

import json
import math

import hrl


def close(a, b, tol=1e-10):
    return max(abs(x - y) for x, y in zip(a, b)) < tol


def main():
    u = hrl.Grid.white_noise(2, 6, 7)
    assert (u.dim, u.level, len(u)) == (2, 6, 4096)

    # Haar roundtrip and Parseval
    assert close(hrl.haar_roundtrip(u).samples, u.samples, 1e-12)
    assert abs(hrl.haar_energy(u) - u.lp_norm(2.0) ** 2) < 1e-10

    # directional projections sum to u minus its mean
    parts = [hrl.directional_projection(u, e) for e in ([1, 0], [0, 1], [1, 1])]
    total = parts[0] + parts[1] + parts[2]
    mean = sum(u.samples) / len(u)
    assert close(total.samples, [x - mean for x in u.samples])

    # slab ring operator on a single Haar function: ratio 2^{-λ/2} at p = 2
    h = hrl.Grid.haar(0, [0, 0], [1, 0], 8)
    for lam in (1, 2, 3):
        r = hrl.ring(h, [1, 0], lam).lp_norm(2.0) / h.lp_norm(2.0)
        assert abs(r - 2 ** (-lam / 2)) < 1e-12, (lam, r)

    # Σ R_i² = -Id on mean-zero functions without Nyquist modes, checked on a plane wave
    w = hrl.Grid(2, 5, [math.cos(2 * math.pi * (3 * i + 2 * j) / 32) for i in range(32) for j in range(32)])
    sq = hrl.riesz(hrl.riesz(w, 0), 0) + hrl.riesz(hrl.riesz(w, 1), 1)
    assert (sq + w).sup_norm() < 1e-12
    back = hrl.riesz_inv(hrl.riesz(w, 0), 0, "composition")
    assert (back - w).sup_norm() < 1e-10

    # layers and shifts
    assert hrl.layer(u, [1, 0], 1).lp_norm(2.0) > 0.0
    assert hrl.layer(u, [1, 0]).lp_norm(2.0) > 0.0
    assert abs(hrl.figiel_shift(h, [1, 0]).lp_norm(2.0) - 1.0) < 1e-12

    assert hrl.exponents(4.0) == (2.0, 4.0)
    slope, _, res = hrl.fit_decay([(1, -0.5), (2, -1.0), (3, -1.5)])
    assert abs(slope + 0.5) < 1e-12 and res < 1e-12

    report = json.loads(hrl.run_experiment("kernel-check", seed=3))
    assert report["subcommand"] == "kernel-check" and report["pass"], report

    try:
        hrl.directional_projection(u, [2, 0])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid sign pattern accepted")

    print("hrl smoke test passed")


if __name__ == "__main__":
    main()
