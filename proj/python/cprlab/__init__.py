"""Python surface of the cprlab core: prototype losses, the sorted-and-shifted
covariance loss, the exact covariance oracle, probability bounds, baseline
regularizers, synthetic data helpers, and the CLI entry point."""

from cprlab._core import (  # noqa: F401
    CprError,
    cantelli_one_sided,
    chebyshev_two_sided,
    cli_main,
    cosine_lr,
    cosine_similarity,
    cov_loss,
    cov_loss_random_pad,
    cov_matrix_oracle,
    cpr_metric,
    cross_entropy,
    cs_loss,
    decov_loss,
    delta_vector,
    dissimilarity,
    empirical_tail_probability,
    generate_blobs,
    normalize,
    normalize_pullback,
    orthoreg_cost,
    proto_loss,
    softmax,
    sort_with_permutation,
    squentropy_loss,
    stratified_subsets,
)

__version__ = "0.1.0"
