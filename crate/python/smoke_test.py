# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the relaxec_py extension.

Uses an installed `relaxec_py` if there is one; otherwise builds the extension with
cargo and loads it from the target directory.
"""

import importlib.util
import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import relaxec_py

        return relaxec_py
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "relaxec-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "librelaxec_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp()) / "relaxec_py.so"
    shutil.copy(lib, tmp)
    module_spec = importlib.util.spec_from_file_location("relaxec_py", tmp)
    mod = importlib.util.module_from_spec(module_spec)
    module_spec.loader.exec_module(mod)
    return mod


def main():
    rx = load()

    m = rx.gen_mlp(3)
    for a in range(8):
        for b in range(8):
            bits = [bool(a >> i & 1) for i in range(3)] + [bool(b >> i & 1) for i in range(3)]
            assert m.eval(bits) == [bool((a * b) >> 2 & 1)], (a, b)

    again = rx.Netlist.from_blif(m.to_blif())
    assert again.num_gates == m.num_gates

    status, report = rx.check(m, m)
    assert status == "Equivalent", status
    assert json.loads(report)["schema"] == 1

    bug = rx.inject_bug(m, 1, 0)
    status, report = rx.check(m, bug)
    assert status == "Inequivalent", status
    assert "witness" in json.loads(report)

    n1, n2 = rx.gen_hgated_pair(2)
    assert rx.check(n1, n2, "star")[0] == "Equivalent"

    # Buffer pair: x'=1, x''=2 under EQ, z'=3 and z''=4 copy them.
    a = [[-1, 2], [1, -2]]
    b = [[-3, 1], [3, -1], [-4, 2], [4, -2]]
    astar = rx.pqe_solve(a, b, [1, 2])
    assert rx.pqe_verify(a, b, [1, 2], astar)

    assert rx.extract_interpolant([[2]], [[-2]]) == [[2]]
    assert rx.to_dimacs([[1, -2]]) == "p cnf 2 1\n1 -2 0\n"

    try:
        rx.gen_mlp(1)
    except ValueError:
        pass
    else:
        raise AssertionError("k=1 must be rejected")

    print("relaxec_py smoke test: ok")


if __name__ == "__main__":
    sys.exit(main())
