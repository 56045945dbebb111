from dmcc.tracking.dynamics import augmented_ode, nominal_ode, observation
from dmcc.tracking.gp import GprModel, gpr_posterior_mean
from dmcc.tracking.nmpc import Nmpc, NmpcConfig, NmpcStep, nmpc_step
from dmcc.tracking.sim import (ClosedLoopLog, Disturbance, Reference, TrackingResult, hover_reference,
                               plant_step, reference_from_plan, run_closed_loop, simulate_loop)
