"""Distributed per-bus filters, their discretisations and supervisory rules."""

from .laws import Agent, jacobi_step, step_dqgdql, step_dvdq, step_dvldvg, update_agent
from .multiarea import MultiAreaSystem, grow_areas, partition_multiarea
from .network import AgentNetwork, dense_system, measurements_from
from .stability import (empirical_onset, euler_diverges, euler_stability_bound,
                        jacobi_spectral_radius)
from .state import (AgentState, Inbox, LocalData, LocalityError, LocalMeasurement,
                    NeighborMessage, Scheme, SchemeConfig, initial_state, local_data)
from .supervisory import (consensus_init, max_consensus_step, severity, switch_mode,
                          threshold_alert, var_limit_update)

__all__ = [
    "Agent", "AgentNetwork", "AgentState", "Inbox", "LocalData", "LocalMeasurement",
    "LocalityError", "MultiAreaSystem", "NeighborMessage", "Scheme", "SchemeConfig",
    "consensus_init", "dense_system", "empirical_onset", "euler_diverges",
    "euler_stability_bound", "grow_areas", "initial_state", "jacobi_spectral_radius",
    "jacobi_step", "local_data", "max_consensus_step", "measurements_from",
    "partition_multiarea", "severity", "step_dqgdql", "step_dvdq", "step_dvldvg",
    "switch_mode", "threshold_alert", "update_agent", "var_limit_update",
]
