"""Smoke test for the jumpsde extension module.

Build and install the wheel first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/jumpsde-*.whl
    python crates/python/python/smoke_test.py
"""

import math

import jumpsde


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    p = jumpsde.ModelParams.set_one()
    assert p.validate() == ("Supercritical", None)
    assert p.m_exponent() == 3.0
    assert p.q() == 0.0
    assert close(p.drift(1.0), -2.5)
    assert close(p.transformed_drift(1.0), 1.625)

    assert jumpsde.lamperti_forward(1.5, 4.0) == 0.5
    assert jumpsde.lamperti_inverse(1.5, 0.5) == 4.0

    h = jumpsde.JumpCoefficient("linear:-0.5")
    k = h.constants(p, require_band=True)
    assert close(k["mu1"], math.sqrt(2.0)) and close(k["r"], 0.5)
    assert close(jumpsde.jump_map_z(1.5, h, 1.0), math.sqrt(2.0))

    try:
        jumpsde.JumpCoefficient("sine:1").constants(p, require_band=True)
    except ValueError as e:
        assert "band" in str(e)
    else:
        raise AssertionError("unit sine must fail the band condition")

    try:
        jumpsde.ModelParams(2, 1, 1.5, 5, 1, 1.8, 1.5).validate()
    except ValueError as e:
        assert "Invalid regime" in str(e)
    else:
        raise AssertionError("gamma < 2 rho - 1 must be rejected")

    z = jumpsde.implicit_step_z(p, 1.0, 2.0 ** -5)
    assert close(z - 2.0 ** -5 * p.transformed_drift(z), 1.0)

    nodes, flags = jumpsde.build_mesh(2, 1.0, [0.3])
    assert nodes == [0.0, 0.3, 0.5, 1.0] and flags == [False, True, False, False]

    path = jumpsde.simulate(p, h, 32, seed=42)
    assert len(path["t"]) == 33 + sum(path["is_jump"])
    assert all(x > 0 for x in path["x"])
    assert path == jumpsde.simulate(p, h, 32, seed=42)

    (report,) = jumpsde.strong_error_ladder(p, h, ["tjabem"], [16, 32, 64, 128], 1024, 300, 7)
    assert 0.7 < report["slope"] < 1.3, report["slope"]

    cells = jumpsde.positivity_table(
        [("set1", p), ("set2", jumpsde.ModelParams.set_two())],
        ["linear:-0.5", "linear:0.5", "sine:1"],
        [32],
        1.0,
        100,
        3,
    )
    assert len(cells) == 6 and all(c["percent"] == 0.0 for c in cells)

    rows = jumpsde.moment_probe(p, h, 64, [0.0, 2.0], 100, 5)
    assert rows[0][1] == 1.0 and rows[0][3] == 1.0

    slope, _, r2 = jumpsde.fit_order([(1.0, 1.0), (0.5, 0.5)])
    assert close(slope, 1.0) and close(r2, 1.0)

    print("jumpsde smoke test passed")


if __name__ == "__main__":
    main()
