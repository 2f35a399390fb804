"""Smoke test for the vbmap_py extension module.

Build and install first:
    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""

import csv
import io
import math

import vbmap_py as vb

GAMMA_E = 28.02495


def main():
    sys = vb.SpinSystem.default()
    assert sys.dim == 81, sys.dim
    assert sys.n_nuclei == 3

    p = vb.FieldPoint(10.0)
    h = vb.hamiltonian(sys, p)
    assert len(h) == 81 and len(h[0]) == 81
    assert all(h[i][j] == h[j][i].conjugate() for i in range(81) for j in range(81))

    levels = vb.energies(sys, p)
    assert levels == sorted(levels)
    trace = sum(h[i][i].real for i in range(81))
    assert abs(trace - sum(levels)) < 1e-6

    trans = vb.transitions(sys, p)
    assert len(trans) == 1458
    best = max(trans, key=lambda t: t["probability"])
    assert best["ms_initial"] == 0 and best["ms_final"] in (-1, 1)

    (s,) = vb.sensitivities(sys, vb.FieldPoint(20.0))
    assert abs(s["grad_MHz_per_mT"] - GAMMA_E) / GAMMA_E < 0.05, s

    assert abs(vb.estimate_t2(GAMMA_E) - 0.207) < 0.001
    dips = vb.dip_fields(48.158)
    assert abs(dips[2] - 48.158 / GAMMA_E) < 1e-12

    grid = '{"kind": "line-parallel", "b_min_mT": 5.0, "b_max_mT": 6.0, "n": 3}'
    text = vb.sweep_csv(sys, grid, ["gradient", "t2"])
    assert text.startswith("# schema: vbmap-sweep/1")
    rows = list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))
    assert len(rows) == 3
    assert all(math.isfinite(float(r["t2_us"])) for r in rows)

    roundtrip = vb.SpinSystem.from_json(sys.to_json())
    assert roundtrip.dim == 81
    try:
        vb.FieldPoint(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative field accepted")

    print("vbmap_py smoke test passed")


if __name__ == "__main__":
    main()
