"""Adaptive unrolled reconstruction of undersampled dynamic MRI with prompt-conditioned regularizers."""

from .core import circ_shift, fft2c, ifft2c, inner, norm
from .sampling import (MaskKind, SamplingMask, achieved_rate, make_gaussian_mask, make_mask,
                       make_pseudo_radial_mask, make_uniform_mask)
from .sense import CoilSensitivities, adjoint, forward, normal, retrospective_undersample, simulate_sensitivities
from .embedding import PatternEmbedding, contrast_embedding, pattern_embedding
from .channel_shift import channel_shift_augment, default_shifts
from .networks import NetKind, NetSpec, ParamStore, init_params, net_forward
from .unrolled import CascadeConfig, cg_solve, entry_index, init_cascade, reconstruct
from .phantom import PhantomSpec, ReconSample, build_dataset, generate_phantom
from .cfl import read_cfl, write_cfl
from .metrics import crop_region, nmrse, paired_t_test, ssim
from .training import Method, MetricsReport, TrainConfig, adam_step, benchmark, loss, train

__version__ = "0.1.0"
