"""Level-by-level hierarchical text classification with ordered-neurons LSTMs.

Each taxonomy level gets its own classifier. From level 2 on, the parent
category's label text is prepended to the document, and the recurrent
weights are initialised from the level above.
"""

__version__ = "0.1.0"

from .taxonomy import Taxonomy, TaxonomyError, build_taxonomy, read_taxonomy  # noqa: E402
from .corpus import (  # noqa: E402
    Document,
    EmbeddingMatrix,
    Vocabulary,
    build_vocabulary,
    compose_level_input,
    generate_synthetic_corpus,
    load_embeddings,
    tokenize,
)
from .classifier import LevelClassifier  # noqa: E402
from .trainer import (  # noqa: E402
    HierarchicalModel,
    TrainConfig,
    predict_path,
    predict_paths,
    train_hierarchy,
    train_level,
    transfer_parameters,
)
from .metrics import EvalReport, coverage_error, evaluate, ranking_loss  # noqa: E402
from .persistence import load_model, save_model  # noqa: E402

__all__ = [
    "Taxonomy", "TaxonomyError", "build_taxonomy", "read_taxonomy",
    "Document", "EmbeddingMatrix", "Vocabulary", "build_vocabulary", "compose_level_input",
    "generate_synthetic_corpus", "load_embeddings", "tokenize",
    "LevelClassifier",
    "HierarchicalModel", "TrainConfig", "predict_path", "predict_paths", "train_hierarchy",
    "train_level", "transfer_parameters",
    "EvalReport", "coverage_error", "evaluate", "ranking_loss",
    "load_model", "save_model",
]
