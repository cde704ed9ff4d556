from .nets import MLP, Adam
from .agent import (
    AgentConfig,
    ReplayBuffer,
    RLTransition,
    WolpertingerAgent,
    encode_phases,
    knn_project,
    load_agent,
    save_agent,
    select_action,
    transfer_init,
)
from .learn import (
    GainEnvironment,
    LearnedResult,
    TaskTrace,
    env_step,
    learn_vector,
    run_task,
)

__all__ = [
    "MLP",
    "Adam",
    "AgentConfig",
    "ReplayBuffer",
    "RLTransition",
    "WolpertingerAgent",
    "encode_phases",
    "knn_project",
    "load_agent",
    "save_agent",
    "select_action",
    "transfer_init",
    "GainEnvironment",
    "LearnedResult",
    "TaskTrace",
    "env_step",
    "learn_vector",
    "run_task",
]
