"""Delay-adaptive predictor feedback with exact and learned predictors."""

from .adaptation import (AdaptiveState, UpdateSignals, phi_update, project,
                         q1_profile, step_delay_estimate, transition_matrices,
                         update_signals, w_profile)
from .delay_line import InputHistory, SpatialGrid
from .dynamics import (FINITE_DIFFERENCE, BenchmarkConstants, LipschitzEstimate,
                       PlantModel, benchmark_plant, estimate_lipschitz, hill_f1,
                       hill_f2, jacobian_fd, linear_test_plant, make_plant,
                       zero_test_plant)
from .estimator import PredictorOperatorRegressor
from .predictor import (PredictorBlowUpError, PredictorProfile, PredictorQuery,
                        lipschitz_constant, predict, predictor_uniform_bound)
from .simulator import (BenchReport, SimConfig, SimulationBlowUp, TrajectoryLog,
                        bench_predictors, diagnostics_step, read_trajectory_csv,
                        recommended_b, run_closed_loop)
from .surrogate import (SurrogateArchitecture, SurrogateParams, forward,
                        forward_batch, init_params, load_params, resample_profile,
                        save_params, trunk_basis)
from .training import (Dataset, DatasetSample, SamplingConfig, SupErrorReport,
                       TrainConfig, TrainReport, adam_step, eval_sup_error,
                       generate_dataset, loss_and_gradients, train)

__version__ = "0.1.0"
