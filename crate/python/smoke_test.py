"""Smoke test for the thermal_eit extension module.

Uses an installed module when available, otherwise the shared library from
`cargo build --release -p thermal-eit-py`.
"""

import importlib.machinery
import importlib.util
import pathlib
import sys


def load():
    try:
        import thermal_eit

        return thermal_eit
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libthermal_eit.so", "libthermal_eit.dylib", "thermal_eit.dll"):
            path = root / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("thermal_eit", str(path))
                spec = importlib.util.spec_from_loader("thermal_eit", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                sys.modules["thermal_eit"] = module
                return module
    sys.exit("thermal_eit not built; run cargo build --release -p thermal-eit-py")


def main():
    te = load()

    coarse = te.Grid(20, 10.0, 2)
    fine = coarse.fine()
    assert fine.n == 40 and coarse.num_nodes == 400

    truth = te.Conductivity.phantom("two-bumps", fine)
    known = truth.restrict(coarse)
    assert min(known.re) > 0

    boundary = te.Boundary.affine_pair()
    u = te.solve(known, boundary)
    assert len(u) == 2 and len(u[0][0]) == coarse.num_nodes

    # Constant conductivity reproduces the affine boundary data inside.
    flat = te.Conductivity.phantom("constant:1.0", coarse)
    (re, _), _ = te.solve(flat, boundary)
    exact = [0.1 * (x + y) for x, y in coarse.coords()]
    assert te.relative_l2_error(re, exact) < 1e-8

    data = te.synthesize(truth, coarse, boundary, 0.1)
    assert len(data.data) == 2

    cond = te.condition_map(known, boundary, "real", 16)
    assert len(cond) == coarse.num_nodes and min(cond) >= 1.0

    rec = te.reconstruct(data, boundary, known)
    err = te.relative_l2_error(rec.re, known.re, coarse.interior_nodes())
    print(f"iterations {rec.iterations}, converged {rec.converged}, error {err:.4f}")
    assert rec.converged and err < 0.15

    assert te.electrode_value("affine:1,0,0", 3.0, 4.0) == complex(1.0, 0.0)
    try:
        te.Conductivity.phantom("no-such", coarse)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown phantom accepted")
    print("ok")


if __name__ == "__main__":
    main()
