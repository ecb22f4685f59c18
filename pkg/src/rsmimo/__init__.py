"""Rate-splitting precoder optimization and evaluation for MIMO broadcast
channels with imperfect transmitter channel knowledge."""

from .config import PERFECT, SystemConfig, load_config
from .channel import (ChannelEstimate, SampleSet, draw_channel, draw_scene,
                      make_estimate, make_rng, make_saa_samples, spawn_rngs)
from .rates import (AverageRates, PrecoderSet, average_rates,
                    instantaneous_rates, interference_covariances,
                    mmse_equalizers, mmse_matrices)
from .wmmse import SafBlocks, awmse, optimal_weights, step1_update
from .qcqp import QcqpProblem, QcqpSolution, assemble, solve
from .ao import OptResult, initialize_precoders, run_ao, run_rs_two_stage
from .baselines import (DofInputs, NomaResult, UnsupportedRegime, dof_mu_mimo,
                        dof_noma, dof_rs, mu_mimo_optimize,
                        noma_optimize_2user, noma_sum_rate_upper_bound,
                        su_capacity, waterfilling)

__version__ = "0.1.0"
