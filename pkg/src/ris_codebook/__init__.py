"""Learning reflection beamforming codebooks for reconfigurable
intelligent surfaces, from receive-power feedback only.

The package provides a synthetic channel/scenario generator, the quantized
phase-grid algebra with oracle baselines, a multi-level sub-array
decomposition, a Wolpertinger-style learning agent, power-feature user
clustering, sklearn-style estimators, and a CLI experiment harness.
"""

from .scenario import (
    Channel,
    ChannelDataset,
    ClusterSpec,
    CompositeChannel,
    PathComponent,
    SurfaceGeometry,
    SyntheticScenario,
    VisibilityRegion,
    array_response,
    composite_channel,
    export_channels,
    generate_channel,
    generate_scenario,
    import_channels,
    random_visibility,
)
from .codebook import (
    Codebook,
    InteractionVector,
    PhaseGrid,
    aligned_oracle,
    codebook_objective,
    dft_codebook,
    dft_phases,
    egc_upper_bound,
    exhaustive_search,
    gain,
    gain_matrix,
    load_codebook,
    phase_gain,
    save_codebook,
)
from .multilevel import (
    LevelPhases,
    LevelSpec,
    decomposition_identity_check,
    effective_channel,
    index_to_multilevel,
    multilevel_to_index,
    synthesize_phases,
)
from .drl import (
    AgentConfig,
    GainEnvironment,
    LearnedResult,
    ReplayBuffer,
    RLTransition,
    TaskTrace,
    WolpertingerAgent,
    env_step,
    knn_project,
    learn_vector,
    load_agent,
    save_agent,
    select_action,
    transfer_init,
)
from .clustering import (
    ClusterAssignment,
    cluster_users,
    power_features,
    sensing_codebook,
)
from .estimators import CodebookLearner, PowerFeatureClusterer
from .pipeline import (
    ExperimentConfig,
    ResultBundle,
    oracle_report,
    run_pipeline,
    sweep_codebook_size,
)
from .plots import emit_plots
from .utils import derive_seed, wrap_phase

__version__ = "0.1.0"
