"""Smoke test for the Python bindings.

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import math

import mecmfg


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel)


def main():
    assert close(mecmfg.red_aoi(1.0, 1.0, 0.0, 2.0, 5.0), 1.5)
    assert close(mecmfg.red_aoi(1.0, 0.0, 0.0, 2.0, 5.0), 1.2)
    assert close(mecmfg.yg_aoi(1.0, 0.6, 2.0, 0.0, 0.0, 1.0, 5.0), mecmfg.red_aoi(1.0, 0.6, 2.0, 1.0, 5.0))

    config = mecmfg.SystemConfig(num_ues=10, es_rate=10.0)
    start = mecmfg.Policy(0.6, 0.5, 0.6, 0.7)
    costs = mecmfg.evaluate(config, start)
    print("initial point:", costs)

    eq = mecmfg.solve(config, start)
    print(eq, eq.policies)
    assert eq.converged
    assert eq.fixed_point_residual(config) <= 4e-6
    assert 0.0 <= eq.exploitability(config) < 1e-3

    sim = mecmfg.simulate(config, start, events=200_000, seed=1, replications=2)
    print("simulated age:", sim["aoi"])
    for i, name in enumerate(("red", "yellow", "green")):
        assert close(sim["aoi"][name][0], costs["aoi"][i], rel=0.05)

    try:
        mecmfg.red_aoi(-1.0, 0.5, 0.0, 1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative rate accepted")

    same = mecmfg.SystemConfig.from_json(config.to_json())
    assert same.to_json() == config.to_json()
    print("python smoke test passed")


if __name__ == "__main__":
    main()
