"""pathnas: budget-capped evolutionary NAS with a contrastive ranking predictor.

The library turns cell architectures (labeled DAGs) into binary path-based
hard encodings, pretrains a learnable soft encoder to mirror the grouping
structure of those encodings, fine-tunes a pairwise ranking head on real
accuracies, and drives an evolutionary search that spends its scarce real
evaluations through an exploit/explore infill criterion.
"""

__version__ = "0.1.0"

from .cluster import Clustering, crowding_distance, k_medoids
from .driver import (
    SearchConfig,
    SearchResult,
    kendall_tau,
    random_search,
    run_search,
    write_run_artifacts,
)
from .evo import (
    EvoConfig,
    connection_mutation,
    crossover,
    generate_offspring,
    operation_mutation,
)
from .losses import (
    FinetuneConfig,
    PretrainConfig,
    finetune,
    finetune_loss,
    mse_loss,
    pretrain,
    pretrain_loss,
)
from .oracle import (
    BudgetLedger,
    LabeledSample,
    SyntheticLandscape,
    TabularOracle,
    export_tabular,
    load_tabular,
    query,
    synthetic_fitness,
    synthetic_sample,
)
from .paths import (
    Path,
    PathTable,
    build_path_table,
    encode_architecture,
    encode_path,
    enumerate_paths,
    load_path_table,
    manhattan_distance,
    path_id_sequence,
    save_path_table,
    sort_paths,
)
from .predictor import (
    Predictor,
    PredictorConfig,
    default_config_for,
    forward_embedding,
    forward_score,
    gin_forward,
    node_attention_pool,
    path_attention_forward,
)
from .presets import (
    enumerate_nb201_cells,
    get_preset,
    nb101_like_space,
    nb201_cell_arch,
    nb201_like_space,
    toy_space,
    toy_three_path_arch,
)
from .report import SweepSpec, emit_report, run_sweep
from .selection import (
    InfillCandidate,
    environment_selection,
    infill_sampling,
    predict_uncertainty,
)
from .space import (
    Architecture,
    ArchHash,
    SearchSpace,
    arch_hash,
    load_space,
    random_architecture,
    save_space,
    validate,
)
