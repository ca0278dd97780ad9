"""Minimal numpy autodiff engine, layers and optimiser for the learned models."""
from .checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint, save_loss_csv
from .functional import (attention, conv1d, conv_output_length, conv_transpose1d, haar_split,
                         layer_norm, mse, stft_magnitude)
from .layers import (Conv1d, ConvTranspose1d, Embedding, LayerNorm, Linear, Module,
                     MultiHeadAttention, parameter)
from .optim import AdamW
from .tensor import (Tensor, as_tensor, concat, default_dtype, dropout, embedding, exp,
                     finite_checks, get_default_dtype, leaky_relu, log, matmul, mean, no_grad,
                     pad_last, relu, repeat_last, reshape, set_default_dtype, sigmoid, softmax, sqrt,
                     stack, tabs, tanh, transpose, tsum, where)
