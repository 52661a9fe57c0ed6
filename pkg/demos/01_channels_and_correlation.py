"""
Synthetic channels and frequency correlation
============================================

Draw channels from both preset scenarios, turn them into eigenvector CSI and
measure how similar the dominant eigenvectors of neighbouring subcarrier
groups are as the groups get wider.
"""

import numpy as np

from iecsi.channel import SCENARIOS, generate_dataset
from iecsi.incorporation import full_eigen_csi, incorporate
from iecsi.metrics import correlation_report

# a few full-size samples of each scenario
for name in ("indoor-like", "outdoor-like"):
    H = generate_dataset(SCENARIOS[name], 20, seed=0)
    print(f"{name}: channel stack {H.shape} ({H.dtype})")

    # one dominant eigenvector per subcarrier, then one per group of 16
    W = full_eigen_csi(H)
    Wbar = incorporate(H, 16)
    print(f"  W {W.shape}, W-bar {Wbar.shape}")

    # adjacent-group similarity falls as groups span more bandwidth
    report = correlation_report(H)
    for g, v in zip(report.granularities, report.values):
        print(f"  granularity {g:4d}: {v:.4f}")

# grouping trades feedback size against how well W-bar represents W
H = generate_dataset(SCENARIOS["indoor-like"], 10, seed=1)
W = full_eigen_csi(H)
for n_gr in (4, 16, 64):
    Wbar = incorporate(H, n_gr)
    # repeat each group eigenvector over its subcarriers
    approx = np.repeat(Wbar, n_gr, axis=-1)
    rho = np.abs(np.sum(W.conj() * approx, axis=-2)).mean()
    print(f"N_gr={n_gr:3d}: {Wbar.shape[-1]:4d} columns, GCS of piecewise-constant W {rho:.4f}")
