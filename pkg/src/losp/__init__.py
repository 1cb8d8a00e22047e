"""Multi-shot diffusion-MRI reconstruction with 1D low-rank Hankel priors.

The pipeline: procedural phantoms (:mod:`losp.phantom`) modulated by
organ-specific polynomial shot phases (:mod:`losp.phase`) are encoded into
sampled multi-coil k-space (:mod:`losp.encoding`). Reconstruction runs an
ADMM solver with per-line Hankel rank truncation (:mod:`losp.solver`,
:mod:`losp.hankel`), whose truncation ranks come from a fixed value, an
exhaustive oracle (:mod:`losp.labels`), or a small regressor trained on
synthesized labeled lines (:mod:`losp.ranknet`).
"""

from .config import RunConfig
from .encoding import (CoilMaps, MultiShotKSpace, ShotSampling,
                       add_complex_noise, adjoint_encode, fft1c, fft2c,
                       forward_encode, ifft1c, ifft2c, make_shot_masks,
                       simulate_coils)
from .errors import (ConfigError, FormatError, LospError, NumericalError,
                     PhantomError)
from .hankel import HankelSpec, frame_weights, lift, singular_values, truncate_svd
from .labels import (DatasetConfig, HybridLine, LabeledDataset, TrainingSample,
                     extract_lines, hsvd_recover, line_psnr, optimal_rank,
                     synthesize_dataset)
from .metrics import adc_fit, image_psnr
from .phantom import Phantom, generate_phantom
from .phase import PhaseSpec, apply_phase, render_shot_phase, sample_phase_spec
from .ranknet import (RankNetWeights, TrainConfig, featurize, load_weights,
                      predict_rank, save_weights, train)
from .solver import (FixedRank, LearnedRank, OracleRank, SolverConfig,
                     reconstruct, shot_combine, zero_filled)

__version__ = "0.1.0"
