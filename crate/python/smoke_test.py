"""Smoke test for the cl_recovery_py extension.

Build first with `cargo build -p cl-recovery-py`, then run
`python3 python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def locate_extension():
    for profile in ("debug", "release"):
        lib = ROOT / "target" / profile / "libcl_recovery_py.so"
        if lib.exists():
            dest = HERE / "cl_recovery_py.so"
            shutil.copyfile(lib, dest)
            return
    sys.exit("libcl_recovery_py.so not found; run `cargo build -p cl-recovery-py`")


locate_extension()
sys.path.insert(0, str(HERE))
import cl_recovery_py as cl  # noqa: E402

CONFIG = """
seed = 7
paradigm = "replay"

[spec]
d_x = 4
d_y = 1
tasks = 3
m = 200
nu = 0.1

[chain]
kind = "rotations"

[memory]
kind = "full"
"""


def main():
    exp = cl.Experiment(CONFIG)
    assert len(exp.hash()) == 12
    assert cl.Experiment(exp.to_toml()).hash() == exp.hash()
    assert cl.Experiment(CONFIG, ["seed=8"]).hash() != exp.hash()

    fit = exp.train()
    assert fit["converged"], fit
    assert fit["err_weighted"] < 0.05, fit

    rows = exp.sweep()
    assert any(r["kind"] == "aggregate" for r in rows)
    assert exp.sweep_csv().splitlines()[0].startswith("kind,")

    b = exp.bound()
    assert b["value"] > 0 and b["kappa"] >= 1.0

    xs, ys = exp.generate()
    assert [len(t) for t in xs] == [200, 200, 200]
    assert len(ys[0][0]) == 1

    chain = cl.Chain.scaling(3, 3, 2.0)
    assert len(chain) == 3
    assert chain.apply(3, [1.0, 0.0, -1.0]) == [4.0, 0.0, -4.0]
    assert chain.uniform_scale(3) == 4.0
    rot = cl.Chain.rotations(5, 2, seed=11)
    v = rot.apply(2, [1.0, 2.0, 3.0, 4.0, 5.0])
    assert math.isclose(sum(a * a for a in v), 55.0, rel_tol=1e-12)

    inputs = cl.BoundInputs(
        p=4, d_x=4, d_y=1, sigma=0.0, nu=0.1, m=4000, n=[4000] * 4,
        w=[0.25] * 4, kappa=1.0, m2=1.0, l_g=1.0, k_g=3.0, b=1.0,
    )
    assert inputs.n_prime() == 4000
    rx, rv = inputs.radii()
    assert rx == 0.0 and rv > 0.0
    g = inputs.bound()
    assert g["value"] > 0 and len(g["terms"]) == 3

    try:
        inputs.bound("nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown bound kind accepted")
    try:
        cl.Experiment("seed = 1\nbogus = 2\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown config key accepted")

    kept = cl.reservoir_select(100, 10, 3)
    assert len(kept) == 10 and len(set(kept)) == 10
    assert kept == cl.reservoir_select(100, 10, 3)

    slope, _ = cl.fit_loglog([1.0, 2.0, 4.0, 8.0], [1.0, 0.5, 0.25, 0.125])
    assert math.isclose(slope, -1.0, abs_tol=1e-12)
    assert cl.net_size(0, 1.0, 0.1) == 0.0

    rows = cl.validate_norm_concentration(1.0, 16, trials=20000, seed=1)
    assert all(ok for *_, ok in rows)
    _, _, bound, ok = cl.validate_projection_difference(1.0, 16, 4.0, trials=20000, seed=2)
    assert ok and bound > 0

    print("smoke test passed")


if __name__ == "__main__":
    main()
