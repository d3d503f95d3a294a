"""Matrix-free products with Kronecker-structured operators.

Multi-indices are linearised row-major, so the first factor acts on the
slowest index: ``(A1 kron A2) vec(X) = vec(A1 X A2^T)``.
"""
import functools

import numpy as np
import scipy.sparse


def kron_matvec(factors, x, transpose=False):
    """Apply ``kron(*factors)`` (or its transpose) to ``x`` of shape (N,) or (N, k)."""
    factors = list(factors)
    if transpose:
        factors = [f.T for f in factors]
    x = np.asarray(x)
    extra = x.shape[1:]
    shape_in = [f.shape[1] for f in factors]
    X = x.reshape(shape_in + [-1])
    for d, f in enumerate(factors):
        X = np.moveaxis(X, d, 0)
        lead = X.shape
        Y = f @ X.reshape(lead[0], -1)
        X = np.moveaxis(np.asarray(Y).reshape((f.shape[0],) + lead[1:]), 0, d)
    return X.reshape((-1,) + extra)


def kron_full(factors, sparse=False):
    """Materialise a Kronecker product (dense unless ``sparse``)."""
    if sparse:
        return functools.reduce(lambda a, b: scipy.sparse.kron(a, b, format="csr"), factors)
    dense = [f.toarray() if scipy.sparse.issparse(f) else np.asarray(f) for f in factors]
    return functools.reduce(np.kron, dense)
