"""Desk-scale testbed: a sybil-vehicle attack, learned by a from-scratch DQN,
against a waiting-time adaptive traffic signal controller on a simulated
four-way intersection."""

from .config import (AgentConfig, ConfigError, ControllerConfig, RemovalConfig,
                     RunConfig, SimConfig, load_config, save_config)
from .simcore import (DemandSchedule, LaneClass, Light, Movement, SimState,
                      Vehicle, VehicleKind, accumulated_waiting, build_network,
                      car_following_accel, count_vehicles, spawn_real_traffic,
                      step, update_waiting)
from .atsc import (AawtRecord, FixedTimeController, Phase, SignalState,
                   compute_aawt, select_phase)
from .sybil import (ACTION_TABLE, CalibrationTrace, RemovalPolicy,
                    calibrate_threshold, inject, removal_check)
from .numerics import (AdamState, MlpParams, adam_step, forward, init_params,
                       load_params, mae_loss, save_params)
from .dqn import (Agent, Observation, ReplayBuffer, RewardSpec, Transition,
                  attack_reward, baseline_reward, observe, run_episode,
                  select_action, train_step)

__version__ = "0.1.0"
