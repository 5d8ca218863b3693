"""Regenerate ``bl_reference.npz``: a 10,000-cell dG(0) Buckley-Leverett run.

Takes a few minutes.  Usage: ``python3 tests/data/make_bl_reference.py``.
"""
from pathlib import Path

import numpy as np

from reorderdg import cases
from reorderdg.driver import DAY, run

N_FINE = 10_000
PV_STEP = 0.0005
REPORT_PV = 0.3


def main():
    report = run(cases.buckley_leverett(n=N_FINE, degree=0, pv_step=PV_STEP,
                                        report_pv=(REPORT_PV, 0.7)))
    t = REPORT_PV * 100 * DAY
    out = Path(__file__).with_name("bl_reference.npz")
    np.savez_compressed(out, sw=report.snapshots[t]["sw"], report_pv=REPORT_PV,
                        pv_step=PV_STEP, breakthrough_days=report.breakthrough_time() / DAY)
    print(f"wrote {out}; breakthrough {report.breakthrough_time() / DAY:.3f} d")


if __name__ == "__main__":
    main()
