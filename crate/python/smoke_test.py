"""Smoke test for the otc_market extension module.

Build and install first:

    pip install --no-build-isolation -e crates/python
"""

import math

import otc_market as otc


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    bench = otc.Model.non_segmented(
        lambda_=[1.0], gamma_u=1.0, gamma_d=1.0, gamma_ui=[1.0], gamma_di=[1.0], m=[0.2]
    )
    root = (-3.4 + math.sqrt(3.4**2 + 4 * 2 * 1.6)) / 4
    sol = bench.steady()
    assert sol["method"] == "scalar-root"
    assert close(sol["state"][0], root, 1e-9), sol
    assert abs(sum(bench.rhs([0.4, 0.4, 0.1, 0.1]))) < 1e-14

    times, states = bench.integrate([0.4, 0.4, 0.1, 0.1], t_end=50.0)
    assert times[-1] == 50.0
    assert close(states[-1][0], root, 1e-6)

    times, emp, events = bench.simulate([0.4, 0.4, 0.1, 0.1], n=500, t_end=2.0, seed=3)
    again = bench.simulate([0.4, 0.4, 0.1, 0.1], n=500, t_end=2.0, seed=3)
    assert (times, emp, events) == again and events > 0

    ps = otc.Model.partially_segmented(
        lambda_=[1.0, 1.0],
        gamma_ui=[1.0, 1.0],
        gamma_di=[1.0, 1.0],
        gamma_tilde_ui=[1.0, 1.0],
        gamma_tilde_di=[1.0, 1.0],
        m=[0.2, 0.2],
    )
    sol = ps.steady()
    assert sol["residual_inf_norm"] <= 1e-10

    one = otc.Model.counterexample(1.0).steady()
    assert not one["no_steady_state"]
    assert close(one["state"][0], (math.sqrt(2) - 1) / 2, 1e-9)

    none = otc.Model.counterexample(1.75).steady()
    assert none["no_steady_state"] and none["conclusive"]
    assert otc.counterexample_root(1.75) is None
    assert [otc.counterexample_verdict(s) for s in (0.5, 1.0, 1.5, 1.75)] == [
        "yes", "yes", "boundary", "no"
    ]
    assert otc.iterations_needed(1e-16, 4) > 0

    try:
        otc.Model.non_segmented(
            lambda_=[1.0], gamma_u=1.0, gamma_d=1.0, gamma_ui=[1.0], gamma_di=[1.0], m=[1.2]
        ).validate()
    except ValueError:
        pass
    else:
        raise AssertionError("over-full asset mass accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
