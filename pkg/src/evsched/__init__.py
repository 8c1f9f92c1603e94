"""Deep Q-learning scheduler for residential EV charging under ToU tariffs."""

from evsched.data_ingest import Episode, MeterRecord, SynthConfig
from evsched.dqn import AgentConfig, DQNScheduler
from evsched.env import BatteryConfig, ChargingEnv, EnvContext
from evsched.oracle import OracleScheduler, ScheduleSolution
from evsched.profile_analysis import CostProfile, FlexibilityProfile, ProfileAnalyzer
from evsched.tariff import TouSchedule, default_austin_2018

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "BatteryConfig",
    "ChargingEnv",
    "CostProfile",
    "DQNScheduler",
    "EnvContext",
    "Episode",
    "FlexibilityProfile",
    "MeterRecord",
    "OracleScheduler",
    "ProfileAnalyzer",
    "ScheduleSolution",
    "SynthConfig",
    "TouSchedule",
    "default_austin_2018",
]
