"""Feedback codec: Transformer compression, quantization, reconstruction, extrapolation."""
from .loss import average_gcs, codec_loss, codec_loss_np, gcs, gcs_columns
from .model import (
    CodecConfig,
    CodecModel,
    Decoder,
    Encoder,
    ExtrapolationNetwork,
    MultiHeadSelfAttention,
    TransformerLayer,
    extrapolation_index,
    positional_encoding,
    to_complex,
    to_real,
)
from .quantizer import BitStream, dequantize, quantize, straight_through
from .train import (
    DivergenceError,
    EvalResult,
    TrainConfig,
    TrainResult,
    evaluate_codec,
    load_codec,
    save_codec,
    train_codec,
)

__all__ = [name for name in dir() if not name.startswith("_")]
