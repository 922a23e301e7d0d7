"""Phylogenetic Gaussian processes for function-valued traits."""

import json as _json

from ._core import (
    InvalidInputError,
    NonIdentifiableError,
    NumericalError,
    OUHyperParams,
    PhylofuncError,
    PhyloTree,
    align_components,
    build_cov_matrix,
    default_basis,
    gp_posterior,
    log_marginal_likelihood,
    ou_cov,
    paper_hyperparams,
    parse_newick,
    patristic_distances,
    profile_mle,
    random_tree,
    ratio_mle,
    run_ica,
    run_pca,
    sample_weights,
    serialize_newick,
    simulate,
    tip_distance_summary,
    validate_psd,
)
from ._core import run_command as _run_command


def run_command(command, out_dir, **kwargs):
    """Run a CLI command in-process. Returns (files written, summary dict)."""
    files, summary = _run_command(command, str(out_dir), **kwargs)
    return files, _json.loads(summary)


__all__ = [name for name in dir() if not name.startswith("_")]
