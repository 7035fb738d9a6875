"""rrtlab: random recursive trees, the discrete Kingman coalescent, and the
limit laws tying their degrees and depths together.

Layers: ``trees`` (sequential growth, degree/depth queries), ``coalescent``
(merge logs, the relabeling bijection, selection sets, marginal samplers),
``limits`` (closed-form limiting quantities), ``oracle`` (exact small-n
enumeration), ``measures`` (counting windows, estimators, goodness-of-fit),
``experiments`` (replicated studies), ``cli`` (command-line surface).
"""

from .trees import RecursiveTree, VertexStats, grow_rrt, max_degree_set, ordered_degree_depth, stats
from .coalescent import (
    CoalescentChain,
    SelectionRecord,
    TruncatedSelection,
    partial_depths,
    phi,
    run_kingman,
    run_tracked,
    sigma_relabel,
    tau_k,
)
from .limits import (
    CanonicalFDD,
    FddEntry,
    Interval,
    LimitParams,
    LimitPrediction,
    factorial_moment_prediction,
    g_fn,
    g_tilde_fn,
    intb_check,
    limit_params,
    m_eps_pmf,
    parse_fdd,
    poisson_means,
    ppp_intensity,
)

__version__ = "0.1.0"

__all__ = [
    "RecursiveTree",
    "VertexStats",
    "grow_rrt",
    "stats",
    "max_degree_set",
    "ordered_degree_depth",
    "CoalescentChain",
    "SelectionRecord",
    "TruncatedSelection",
    "run_kingman",
    "run_tracked",
    "sigma_relabel",
    "phi",
    "partial_depths",
    "tau_k",
    "Interval",
    "FddEntry",
    "CanonicalFDD",
    "LimitParams",
    "LimitPrediction",
    "limit_params",
    "ppp_intensity",
    "poisson_means",
    "factorial_moment_prediction",
    "g_fn",
    "g_tilde_fn",
    "intb_check",
    "m_eps_pmf",
    "parse_fdd",
    "__version__",
]
