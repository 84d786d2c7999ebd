"""Smoke test for the sparsecode_py extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, or copy
the compiled library next to this file as `sparsecode_py.so`.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import sparsecode_py as sc


def main():
    model = sc.Model(32, 32, 3)
    stats = model.support_stats()
    assert math.isclose(stats["q_i"], 3 / 32)
    assert math.isclose(stats["q_ij"], 6 / 992)

    astar = sc.generate_orthonormal_dictionary(32, 32, 1)
    a0 = sc.perturb_columns(astar, 0.1, 2)
    start = sc.nearness(a0, astar)
    assert abs(start["delta"] - 0.1) < 1e-12

    samples, codes = sc.draw_batch(astar, model, 200, 3)
    assert samples.shape == (32, 200) and len(codes) == 200
    support, values = sc.threshold_decode(astar, samples.column(0), 0.5)
    assert support == codes[0][0]
    assert all(abs(v - w) < 1e-12 for v, w in zip(values, codes[0][1]))

    g_hat = sc.empirical_gradient("simple", a0, samples, model)
    g = sc.expected_gradient("simple", a0, astar, model)
    assert g_hat.shape == g.shape == (32, 32)

    final, trace, csv = sc.run_descent(astar, a0, model, rule="simple", mode="oracle", iterations=10)
    assert len(trace) == 11
    assert trace[-1]["max_col_err"] < 0.01 < trace[0]["max_col_err"]
    assert len(csv.splitlines()) == 12

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "final.scmx")
        sc.save_matrix(path, final)
        back = sc.load_matrix(path)
        assert back.to_rows() == final.to_rows()

    try:
        sc.run_descent(astar, a0, model, rule="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown rule accepted")

    print("smoke test ok: final max col err %.2e" % trace[-1]["max_col_err"])


if __name__ == "__main__":
    main()
