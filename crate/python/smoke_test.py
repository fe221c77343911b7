"""Smoke test of the compiled extension.

Build and run:
    cargo build --release -p expou-python --features extension-module
    cp target/release/libexpou_python.so python/expou.so
    python3 python/smoke_test.py
"""

import datetime
import json
import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import expou  # noqa: E402


def main():
    c = expou.cumulants(1.0)
    assert abs(c["k1"] + 0.005) < 1e-15 and abs(c["k2"] - 0.01) < 1e-15
    assert abs(c["skew"] + 0.2173) < 1e-3, c
    assert expou.cumulants(1.0, beta=0.5)["edgeworth_negative"]

    x = expou.simulate(1.0, paths=20000, dt=1e-2, seed=3)
    assert x == expou.simulate(1.0, paths=20000, dt=1e-2, seed=3)
    s = expou.sample_cumulants(x)
    assert abs(s["k2"] - 0.01) < 5 * s["half_widths"]["k2"], s

    re, im = expou.cf([0.0], 1.0)[0]
    assert abs(re - 1.0) < 1e-12 and abs(im) < 1e-12

    xs = [-0.4 + 0.8 * i / 400 for i in range(401)]
    p = expou.density(xs, 1.0, n=1 << 16, phi_max=500.0)
    mass = sum(0.5 * (p[i] + p[i + 1]) * (xs[i + 1] - xs[i]) for i in range(400))
    assert abs(mass - 1.0) < 1e-3, mass

    _, log10p = expou.negative_vol(1e6, beta=0.01)
    assert -46 <= log10p <= -44, log10p

    try:
        expou.cumulants(1.0, rho=3.0)
    except ValueError as e:
        assert "rho" in str(e)
    else:
        raise AssertionError("invalid rho accepted")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.csv")
        # constant-volatility random walk
        rng = random.Random(7)
        start = datetime.date(1990, 1, 1)
        with open(path, "w") as f:
            f.write("date,close\n")
            price = 100.0
            for i in range(800):
                f.write(f"{start + datetime.timedelta(days=i)},{price:.6f}\n")
                price *= math.exp(0.01 * rng.gauss(0.0, 1.0))
        r = json.loads(expou.calibrate(path, replicas=4))
        assert r["alpha"] > 0 and -1 <= r["rho"] <= 1, r

    print(f"expou {expou.__version__}: python smoke test passed")


if __name__ == "__main__":
    main()
