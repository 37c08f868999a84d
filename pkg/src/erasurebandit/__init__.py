"""Multi-agent bandit learning when the learner's action messages can be erased."""
from .core import BanditInstance, RegretLedger, make_rng, regret_increment, sample_reward, suboptimality_gap
from .channels import AgentChannel, AgentState, DownlinkBank, good_event_violations, repetitions_for, transmit
from .scheduler import (BatchSchedule, ilp_optimum, lemma1_bound, lp_end_time, schedule,
                        schedule_horizontal, schedule_round_robin, schedule_vertical)
from .policies import POLICY_NAMES, empirical_means, eliminate, make_policy
from .bounds import delta_star, theorem1_bound, theorem2_bound
from .harness import ExperimentConfig, parse_config, run_experiment, simulate, write_csv

__version__ = "0.1.0"
