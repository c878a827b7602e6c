#!/usr/bin/env python3
"""1-d cell-constant sweep against the exact closed form.

Runs the lattice sweep at k up to 256 with h <= 1e-4 and prints the relative
error of each sample against (1 - 2a)^3 / 12.
"""

import json
import sys
import tempfile

from comploc.cli import main
from comploc.files import read_json
from comploc.limit import oned_theta_exact


def run(outdir: str) -> int:
    cfg = {
        "dimension": 1,
        "f": {"kind": "constant", "value": 1.0},
        "resolution": {"ratio": 4.0, "h_cap": 5e-5},
        "theta": {
            "alphas": [0.0, 0.1, 0.25, 0.4, 0.5],
            "k_list": [16, 64, 256],
            "families": ["lattice"],
        },
        "output": outdir,
    }
    path = f"{outdir}/config_in.json"
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    code = main(["theta", "--config", path])
    if code != 0:
        return code
    table = read_json(f"{outdir}/theta_table.json")
    print(f"{'alpha':>6} {'estimate':>12} {'exact':>12} {'rel err':>9}")
    for s in table["samples"]:
        exact = oned_theta_exact(s["alpha"])
        rel = abs(s["theta"] - exact) / exact if exact else s["theta"]
        print(f"{s['alpha']:6.2f} {s['theta']:12.6e} {exact:12.6e} {rel:9.2e}")
    return 0


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="theta1d_")
    print(f"writing artifacts to {out}")
    sys.exit(run(out))
