"""Parameter estimation from broken samples.

A broken sample is a set of ``(x, y)`` pairs whose pairing has been lost
within each batch.  The package fits parametric joint densities to such data
by minimising a pseudo-likelihood that averages over all within-batch
pairings.
"""

from .core import (BrokenBatch, Dataset, DensityModel, PairSample, ParamDomain, ParamPoint,
                   read_dataset, write_dataset)
from .errors import *  # noqa: F401,F403
from .loss import (LossReport, expected_loss_bruteforce, expected_loss_exact,
                   full_nll_permanent, limit_loss, mixture_kl, mixture_pseudo_loss,
                   permanent, pseudo_loss, pseudo_loss_grad)
from .models import BivariateNormalRatioModel, DiscreteTabularModel, TorusWrappedGaussianModel
from .optimize import MinimizeOptions, MinimizeResult, finite_diff_grad, minimize_box, minimize_scalar
from .sampling import SeedSpec, break_batches, generate_dataset, simulate_broken

__version__ = "0.1.0"
