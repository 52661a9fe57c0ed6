"""
Complexity accounting and a random-codebook baseline
====================================================

Count parameters and multiply-accumulates of every component at the full
configuration, compare the extrapolation network with a convolutional
alternative, and score random vector quantization at a few bit budgets.
"""

from iecsi.channel import SCENARIOS, generate_dataset
from iecsi.codec import CodecConfig, CodecModel
from iecsi.egan import EganModel, GanConfig
from iecsi.incorporation import incorporate
from iecsi.metrics import codec_complexity, egan_complexity, rvq_feedback

codec = codec_complexity(CodecModel(CodecConfig.full()))
for row in codec.rows():
    print(f"{row['component']:14s} params {row['params']:>10,d}  MACs {row['macs']:>12,d}")
print("extrapolation vs convolutional (K=3): "
      f"{codec.extras['flops_cen_k3']:,} / {codec.extras['flops_fen']:,} = {codec.extras['cen_over_fen_k3']}")

gan = egan_complexity(EganModel(GanConfig()))
for row in gan.rows():
    print(f"{row['component']:14s} params {row['params']:>10,d}  MACs {row['macs']:>12,d}")

# random vector quantization: B bits shared evenly over the 64 group columns

Wbar = incorporate(generate_dataset(SCENARIOS["indoor-like"], 50, seed=3), 16)
for bits in (64, 256, 512):
    print(f"RVQ B={bits:4d}: mean GCS {rvq_feedback(Wbar, bits, seed=0).mean_gcs:.4f}")
