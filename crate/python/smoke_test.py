"""Smoke test for the shiftfuse Python extension.

Build and install first, e.g.

    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import math
from pathlib import Path

import shiftfuse

ROOT = Path(__file__).resolve().parent.parent


def check_simulated():
    ds = shiftfuse.generate(seed=7)
    assert len(ds) == 3500 and ds.p == 1
    tau1, tau0, tau = shiftfuse.true_tau()
    assert math.isclose(tau, tau1 - tau0)

    ests = shiftfuse.estimate(
        ds,
        k_basis=["intercept", "linear:0", "square:0"],
        rho_basis=["intercept", "linear:0", "square:0", "exp:0", "outcome"],
        mu_basis=["intercept", "linear:0", "exp:0"],
    )
    assert len(ests) == 9
    for e in ests:
        assert e.se > 0 and e.ci[0] < e.value < e.ci[1]
        assert abs(e.value - {"tau1": tau1, "tau0": tau0, "tau": tau}[e.estimand]) < 6 * e.se, e


def check_trial_only_degeneracy():
    ds = shiftfuse.generate(seed=3)
    trial = shiftfuse.Dataset(
        [1] * ds.n,
        [t for r, t in zip(ds.r, ds.t) if r == 1],
        [x for r, x in zip(ds.r, ds.x) if r == 1],
        [y for r, y in zip(ds.r, ds.y) if r == 1],
    )
    gold = shiftfuse.gold(trial)
    assert [e.estimand for e in gold] == ["tau1", "tau0", "tau"]


def check_nsw():
    path = ROOT / "data" / "nsw_psid.csv"
    ds = shiftfuse.Dataset.from_csv(
        str(path), "r", "t", "re_dif",
        ["age", "educ", "black", "hisp", "marr", "nodeg"],
        outcome_difference=("re78", "re75"),
    )
    primary, validation = ds.split_half(1)
    ests = shiftfuse.estimate(primary, validation)
    by = {(e.method, e.estimand): e for e in ests}
    print(by[("trial_dr", "tau")], by[("shrinkage", "tau")], sep="\n")
    assert by[("shrinkage", "tau0")].fit_on == "validation"


def check_errors():
    try:
        shiftfuse.Dataset.from_csv("/no/such/file.csv", "r", "t", "y", ["x"])
    except shiftfuse.ShiftfuseError as e:
        assert "/no/such/file.csv" in str(e)
    else:
        raise AssertionError("missing file accepted")


def check_simulate():
    rows = shiftfuse.simulate("experiment2", replications=100, seed=1)
    assert len(rows) == 36


if __name__ == "__main__":
    check_simulated()
    check_trial_only_degeneracy()
    check_nsw()
    check_errors()
    check_simulate()
    print("smoke test passed")
