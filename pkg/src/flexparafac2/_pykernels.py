"""Pure-NumPy fallback for the compiled kernels in ``_ckernels.pyx``."""
import numpy as np


def nnls_sweeps(gram, cross, x, max_sweeps, stag_tol, on_sweep=None):
    """Run cyclic coordinate sweeps on ``x`` in place; return the sweep count.

    Rows of ``x`` are independent problems sharing ``gram``, so each
    coordinate update is vectorized over rows.
    """
    r = x.shape[1]
    diag = np.diag(gram)
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(r):
            gjj = diag[j]
            if gjj <= 0.0:
                new = np.zeros(x.shape[0])
            else:
                others = x @ gram[:, j] - x[:, j] * gjj
                new = np.maximum((cross[:, j] - others) / gjj, 0.0)
            change = np.abs(new - x[:, j])
            if change.size:
                max_change = max(max_change, float(change.max()))
            x[:, j] = new
        max_abs = float(x.max()) if x.size else 0.0
        if on_sweep is not None:
            on_sweep()
        if max_change < stag_tol * (1.0 + max_abs):
            return sweep + 1
    return max_sweeps
