"""Smoke test for the pysobolev extension module.

Build the module first, e.g. `pip install --no-build-isolation -e crates/py`
(requires maturin), then run `python python/smoke_test.py`.
"""

import json
import math

import pysobolev as sl


def main():
    model = sl.Model("sphere", 3)
    assert abs(model.total_volume - 2 * math.pi**2) < 1e-12

    grid = sl.Grid(model, 128)
    eig = grid.laplace_eigenvalues(3)
    assert abs(eig[1] - 3.0) < 1e-8, eig

    crit = sl.Spec.optimal(grid)
    for b in (0.3, 0.6, 0.9):
        assert abs(crit.deficit(grid.bubble(1.0, b))) < 1e-6

    spec = sl.Spec.optimal(grid, q=4.0)
    expected = (2.0 / 3.0) * (2 * math.pi**2) ** -0.5
    assert abs(spec.a - expected) < 1e-14

    cp = spec.minimize(grid.random_positive(seed=7))
    assert cp.converged and abs(cp.value - 1.0) < 1e-8
    assert cp.kernel_dim == 1

    report = spec.ray_scan(mode=1)
    assert abs(report.fitted_slope - 4.0) < 0.05, report.fitted_slope
    assert report.classification == "degenerate"
    assert json.loads(report.to_json())["schema_version"] == 1

    control = sl.Spec.optimal(grid, q=4.0, a_scale=1.1).ray_scan(mode=1)
    assert abs(control.fitted_slope - 2.0) < 0.05, control.fitted_slope

    table = json.loads(sl.constants(sl.Model("product", 4), n=64))
    assert table["strict_binding"] is True

    try:
        sl.Model("sphere", 2)
    except ValueError:
        pass
    else:
        raise AssertionError("d = 2 accepted")

    results = sl.reproduce_suite(only=["constants"], n=64)
    assert all(passed for _, _, passed, _ in results), results

    print("smoke test passed: slope %.4f, control slope %.4f" % (report.fitted_slope, control.fitted_slope))


if __name__ == "__main__":
    main()
