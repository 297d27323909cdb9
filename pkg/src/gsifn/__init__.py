"""Graph-structured interlaced-masked multimodal fusion on a small numpy autodiff engine."""

from .gsit import GsiT, GsiTConfig, concat_mge, export_attention, masked_mha
from .masking import BlockMask, SegLengths, block_pattern, gen_interlaced_mask, gen_structure_mask
from .metrics import MetricReport, msa_metrics
from .mlstm import MLSTMConfig, MLSTMState, mlstm_forward, mlstm_parallel, mlstm_step
from .model import FusionModel, ModelConfig, build_model
from .mult import CrossModalConfig, MulTFusion, crossmodal_transformer, mult_forward
from .tensor import Tensor, backward

__all__ = [
    "BlockMask", "CrossModalConfig", "FusionModel", "GsiT", "GsiTConfig", "MLSTMConfig", "MLSTMState",
    "MetricReport", "ModelConfig", "MulTFusion", "SegLengths", "Tensor", "backward", "block_pattern",
    "build_model", "concat_mge", "crossmodal_transformer", "export_attention", "gen_interlaced_mask",
    "gen_structure_mask", "masked_mha", "mlstm_forward", "mlstm_parallel", "mlstm_step", "msa_metrics",
    "mult_forward",
]
