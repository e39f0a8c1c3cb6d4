"""Gaussian graphical model structure learning by fractional marginal pseudo-likelihood."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Dataset,
    MarkovBlanketFamily,
    ScatterMatrix,
    UndirectedGraph,
    load_dataset,
    logdet_submatrix,
    read_graph,
    scatter,
    schur_conditional_variance,
    write_graph,
)
from .errors import (  # noqa: E402
    ConvergenceError,
    FMPLError,
    InputError,
    NotPositiveDefiniteError,
    NumericalError,
    SearchError,
)
from .evaluate import (  # noqa: E402
    RecoveryReport,
    deviance_statistic,
    ebic,
    mle_precision_given_graph,
    predict_components,
    recovery_report,
)
from .scoring import (  # noqa: E402
    ScoreCard,
    ScoreParams,
    dag_log_marginal_likelihood,
    global_fmpl_score,
    local_fmpl_log_score,
    log_prior_mb,
)
from .search import (  # noqa: E402
    SearchConfig,
    assemble_and,
    assemble_or,
    learn_graph,
    refine_hc,
    search_all_blankets,
    search_markov_blanket,
)
from .synthgen import (  # noqa: E402
    GeneratorSpec,
    PrecisionModel,
    composite_spec,
    generate_graph,
    generate_precision,
    sample_mvn,
    simulate,
)
