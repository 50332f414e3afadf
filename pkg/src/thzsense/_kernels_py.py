"""Pure numpy versions of the compiled kernels."""
import numpy as np


def gain_table(k, x, phase, cos_out, cos_in):
    k = np.asarray(k, dtype=float)
    x = np.asarray(x, dtype=float)
    phase = np.asarray(phase, dtype=float)
    du = np.asarray(cos_out, dtype=float) - cos_in
    out = np.empty((k.size, du.size), dtype=complex)
    for i, ki in enumerate(k):
        out[i] = np.exp(1j * (phase[None, :] + ki * du[:, None] * x[None, :])).sum(axis=1)
    return out


def pair_loss_surface(r, A, B):
    r = np.asarray(r, dtype=complex)
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    out = np.empty((A.shape[1], B.shape[1]))
    for i in range(A.shape[1]):
        e = (r - A[:, i])[:, None] - B
        out[i] = np.sum(e.real**2 + e.imag**2, axis=0)
    return out
