"""Network blocks: GPAM, hypergraphs, HCFM, GMM, TGEM, CQPM and the assembled model."""
from .cqpm import PredictionResult
from .hctn import HCTNModel, ModelInputs, build_model_inputs

__all__ = ['PredictionResult', 'HCTNModel', 'ModelInputs', 'build_model_inputs']
