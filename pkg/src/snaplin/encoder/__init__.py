"""Hypernetwork mapping operating points to eigendecomposed operators."""

from .network import BoundEncoder, predict_many, predict_operator, push_forward, push_latent, rollout
from .params import DenseLayer, EncoderParams, init_params, params_from_dict, params_to_dict

__all__ = [
    "BoundEncoder",
    "DenseLayer",
    "EncoderParams",
    "init_params",
    "params_from_dict",
    "params_to_dict",
    "predict_many",
    "predict_operator",
    "push_forward",
    "push_latent",
    "rollout",
]
