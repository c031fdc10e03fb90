"""flowmark: keyed watermarks in the dynamics of flow matching models.

The watermark rides on the velocity field itself: training nudges
v(x, t) by epsilon * sin(2 pi t) * P c_m, and black-box detection
recovers the message by demodulating N random queries against the
carrier.  See README for the CLI and the experiment suites.
"""

from .backend import BACKEND, backend_name
from .channel import (ChannelModel, capacity, estimate_epsilon,
                      estimate_sigma, jacobi_eigh, simulate_channel)
from .codec import (MultiplexScheme, WatermarkKey, derive_key,
                    grassmann_dim, multiplex_signal, read_key, rotate_key,
                    single_scheme, verify_admissibility, watermark_signal,
                    write_key)
from .datasets import Dataset, load_mnist_idx, make_synthetic
from .detector import (QueryBatch, Signature, decode,
                       demodulated_signature, detection_trial,
                       multiplex_signature, multiplex_trial,
                       sample_queries)
from .errors import (CapacityError, DimensionError, FormatError,
                     SchemeError)
from .flow import (LossConfig, euler_sample, interpolate, joint_loss,
                   optimal_predictor, watermarked_target)
from .harness import (ExperimentReport, HarnessConfig, RunDir,
                      capacity_sweep, run_detection_suite,
                      run_multiplex_suite, run_persistence_suite,
                      run_quality_suite, run_separation_suite,
                      train_model_pool)
from .model import (AdamW, MlpVelocityField, TrainConfig, TrainResult,
                    backward, load_checkpoint, save_checkpoint, train)
from .numkit import energy_distance, qr_orthonormal, welch_t
from .rng import SeededRng, derive_seed

__version__ = "0.1.0"
