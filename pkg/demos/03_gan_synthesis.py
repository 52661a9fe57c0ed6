"""
Paired CSI synthesis with the two-scale GAN
===========================================

Train the generator and both critics for a few steps at the toy size, then
draw synthetic (W-bar, W) pairs and store them as dataset files. A useful
generator needs far more steps; this only shows the moving parts.
"""

import tempfile
import time
from pathlib import Path

import numpy as np

from iecsi.channel import SCENARIOS, generate_dataset
from iecsi.datafile import write_dataset
from iecsi.egan import GanConfig, real_pairs, sample_dataset_files, train_egan
from iecsi.incorporation import full_eigen_csi, incorporate

toy = SCENARIOS["indoor-like"].scaled(n_tx=8, n_subcarriers=64)
cfg = GanConfig.toy(d_g=128, d_d1=16, d_d2=16)
H = generate_dataset(toy, 100, seed=8)

# real pairs as (n, 2, N_T, N) real/imaginary planes
real_l, real_f = real_pairs(incorporate(H, cfg.n_gr), full_eigen_csi(H))
print("real pairs", real_l.shape, real_f.shape)

start = time.perf_counter()
model, history = train_egan(real_l, real_f, cfg, steps=20, seed=0)
print(f"20 steps in {time.perf_counter() - start:.1f}s")
for i in (0, 9, 19):
    s = history[i]
    print(f"  step {i:2d}: W1 {s.wasserstein1:+.3f}  W2 {s.wasserstein2:+.3f}  gp {s.gp1:.3f}/{s.gp2:.3f}")

low, full = sample_dataset_files(model.generator, 1000, seed=1)
print("synthetic", low.matrices().shape, full.matrices().shape,
      "max |entry|", float(np.abs(low.matrices().real).max()))
out = Path(tempfile.mkdtemp())
write_dataset(out / "synthetic_low.csib", low)
write_dataset(out / "synthetic_full.csib", full)
print("written to", out)
