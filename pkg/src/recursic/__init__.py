"""Link-level MIMO detection toolkit.

A learned successive-interference-cancellation detector with multi-path
hypothesis tracking and calibrated soft output, classical baselines
(exhaustive ML, MMSE, ordered ZF/MMSE-SIC), an in-repo trainer for the
shared network block, a small LDPC chain for soft-output validation, and a
seeded Monte Carlo sweep harness.
"""

from .channel import ChannelSpec, ChannelUse, noise_variance, rng_for
from .classic import (detect_ml_exhaustive, detect_mmse, detect_sic,
                      llr_maxlog_exhaustive)
from .detector import (SoftConfig, detect, detect_multipath,
                       detect_multipath_batch, expected_block_evals)
from .ldpc import (Encoder, MinSumDecoder, decode_min_sum, load_alist,
                   make_regular_ldpc, parse_alist, serialize_alist)
from .modem import Constellation, bits_to_symbol, make_qam, nearest_point, symbol_to_bits
from .network import (NetworkParams, block_forward, count_macs,
                      count_parameters, init_params, load_weights,
                      save_weights, snr_embedding)
from .numerics import (QrFactorization, project_receive, qr_decompose,
                       residual_metric, sorted_qr_extended)
from .results import DetectionResult, Diagnostics
from .training import (TrainConfig, TrainSample, estimate_llr_clip,
                       generate_dataset, loss_min_path_ce, train)

__version__ = "0.1.0"
