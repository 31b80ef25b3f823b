"""Pure numpy reference implementations of the hot kernels.

These are the import-time fallback when the compiled extension is missing
and the ground truth the extension is tested against.
"""

import numpy as np


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """out[idx[k], :] += rows[k, :] with repeated indices accumulated."""
    np.add.at(out, idx, rows)


def accumulate_postings(
    scores: np.ndarray,
    term_ids: np.ndarray,
    term_weights: np.ndarray,
    indptr: np.ndarray,
    post_docs: np.ndarray,
    post_weights: np.ndarray,
) -> None:
    """scores[d] += term_weights[t] * post_weights[t -> d] over all query terms.

    Document ids are unique within one term's postings slice, so a fancy-index
    add is safe term by term.
    """
    for t, qw in zip(term_ids, term_weights):
        lo, hi = indptr[t], indptr[t + 1]
        scores[post_docs[lo:hi]] += qw * post_weights[lo:hi]
