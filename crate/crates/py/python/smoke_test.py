"""Smoke test for the dampwave extension module."""
import math

import dampwave as dw


def main():
    p = dw.DampingParams(1.0, 1.0)
    r = p.roots(100.0)
    assert r.regime == "real", r
    x1, x2 = r.columns()
    assert abs(x1 * x2 - 100.0) < 1e-10
    assert p.backward_error(100.0, x2) < 1e-15

    m = dw.Spectrum.geometric(8)
    assert len(m) == 8 and m.eigenvalues[3] == 8.0
    times = [0.0, 0.5, 1.0, 2.0]
    tr = dw.solve(m, p, times, u0=[1.0] * 8)
    u, up = tr.mode(0)
    ref_u, ref_up, _ = dw.oracle_mode(p, 1.0, 1.0, 0.0, times, method="exponential")
    assert max(abs(a - b) for a, b in zip(u, ref_u)) < 1e-8
    assert max(abs(a - b) for a, b in zip(up, ref_up)) < 1e-8

    f = dw.Forcing.sinusoid([0.2] * 8, omega=3.0)
    grid = [0.05 * i for i in range(41)]
    forced = dw.solve(m, p, grid, forcing=f)
    margin, quad = dw.energy_margin(forced, m, f, p)
    assert margin >= -1e-9 - quad, (margin, quad)

    ts = [10.0 ** (i / 4) for i in range(17)]
    name, exponent = dw.fit_growth(ts, [t ** 0.5 for t in ts])
    assert name == "power_law" and abs(exponent - 0.5) < 1e-9

    big = dw.Spectrum.geometric(40)
    assert big.membership([k ** -1.0 for k in range(1, 41)], 0.0) == "converged"

    s0, s1, c0, c1 = dw.blowup_constants(dw.DampingParams(0.5, 1.0))
    assert (s0, s1) == (1.0, 0.5)
    assert abs(c0 - (1.0 - 2.0 * math.exp(-1.0))) < 1e-12
    assert abs(c1 - math.exp(-1.0)) < 1e-12

    try:
        dw.DampingParams(-1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative sigma accepted")
    print("dampwave smoke test ok")


if __name__ == "__main__":
    main()
