"""Dense linear algebra kernels shared by every other module.

All operators are small dense complex matrices (2x2 or 4x4 in practice).
Matrix exponentials go through Hermitian eigendecomposition rather than a
series expansion, so unitarity of propagator steps is limited only by the
eigensolver.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PAULI_I",
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
    "matmul",
    "dagger",
    "kron",
    "is_hermitian",
    "assert_hermitian",
    "expm_hermitian",
    "expm_hermitian_stack",
    "pauli_basis",
    "chain_product",
    "chain_product_batch",
    "prefix_products",
    "unitarity_defect",
]

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_HERMITIAN_RTOL = 1e-12


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two square matrices of matching dimension."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:] or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return np.matmul(a, b)


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose, batched over leading axes."""
    return np.conjugate(np.swapaxes(m, -1, -2))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def is_hermitian(m: np.ndarray, rtol: float = _HERMITIAN_RTOL) -> bool:
    m = np.asarray(m)
    scale = max(float(np.max(np.abs(m))), 1e-300)
    return float(np.max(np.abs(m - dagger(m)))) <= rtol * scale


def assert_hermitian(m: np.ndarray, name: str = "matrix", rtol: float = _HERMITIAN_RTOL) -> np.ndarray:
    if not is_hermitian(m, rtol):
        defect = float(np.max(np.abs(m - dagger(m))))
        raise ValueError(f"{name} is not Hermitian (defect {defect:.3e})")
    return np.asarray(m)


def expm_hermitian(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * H) for Hermitian H via eigendecomposition.

    `scale` is typically -1j*dt, producing a unitary step.
    """
    h = assert_hermitian(np.asarray(h, dtype=complex), "expm_hermitian argument")
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(scale * vals)) @ dagger(vecs)


def _expm2_stack(h: np.ndarray, scale: complex) -> np.ndarray:
    # Spectral decomposition of 2x2 Hermitian H = h0*I + v.sigma in closed
    # form: exp(s H) = e^{s h0} (cosh(s r) I + sinh(s r)/r * v.sigma).
    a = h[..., 0, 0].real
    b = h[..., 1, 1].real
    c = h[..., 0, 1]
    h0 = 0.5 * (a + b)
    hz = 0.5 * (a - b)
    r = np.sqrt(hz * hz + (c * c.conjugate()).real)
    sr = scale * r
    cosh_sr = np.cosh(sr)
    # sinh(s r)/r with the r -> 0 limit equal to s
    small = r < 1e-30
    ratio = np.where(small, scale, np.sinh(np.where(small, 1.0, sr)) / np.where(small, 1.0, r))
    out = np.empty(h.shape, dtype=complex)
    out[..., 0, 0] = cosh_sr + ratio * hz
    out[..., 1, 1] = cosh_sr - ratio * hz
    out[..., 0, 1] = ratio * c
    out[..., 1, 0] = ratio * c.conjugate()
    out *= np.exp(scale * h0)[..., None, None]
    return out


def expm_hermitian_stack(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """Batched exp(scale * H) over the leading axes of a Hermitian stack.

    2x2 blocks use the closed-form spectral decomposition; larger blocks
    fall back to a batched eigendecomposition.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] == 2:
        return _expm2_stack(h, scale)
    vals, vecs = np.linalg.eigh(h)
    return np.matmul(vecs * np.exp(scale * vals)[..., None, :], dagger(vecs))


def pauli_basis(n_qubits: int) -> np.ndarray:
    """Pauli product basis for n qubits, identity first.

    Returns an array of shape (4**n, 2**n, 2**n) with Tr[B_a B_b] = 2**n
    * delta_ab.
    """
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    singles = [PAULI_I, PAULI_X, PAULI_Y, PAULI_Z]
    basis = singles
    for _ in range(n_qubits - 1):
        basis = [np.kron(p, q) for p in basis for q in singles]
    return np.array(basis)


def chain_product(stack: np.ndarray) -> np.ndarray:
    """Ordered product S[N-1] @ ... @ S[0] by pairwise tree reduction."""
    a = np.asarray(stack)
    if a.ndim != 3 or a.shape[0] == 0:
        raise ValueError("expected a non-empty (N, d, d) stack")
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([np.matmul(a[1:-1:2], a[0:-1:2]), a[-1:]])
        else:
            a = np.matmul(a[1::2], a[0::2])
    return a[0]


def chain_product_batch(stack: np.ndarray) -> np.ndarray:
    """Ordered product along axis 1 of a (B, N, d, d) stack."""
    a = np.asarray(stack)
    while a.shape[1] > 1:
        if a.shape[1] % 2:
            a = np.concatenate([np.matmul(a[:, 1:-1:2], a[:, 0:-1:2]), a[:, -1:]], axis=1)
        else:
            a = np.matmul(a[:, 1::2], a[:, 0::2])
    return a[:, 0]


def prefix_products(stack: np.ndarray) -> np.ndarray:
    """All left-accumulated products of a step stack.

    Given steps S[0..N-1], returns U of shape (N+1, d, d) with U[0] = I and
    U[i] = S[i-1] @ ... @ S[0].  Blocked so the sequential work is O(sqrt(N))
    batched multiplies instead of N scalar ones.
    """
    s = np.asarray(stack)
    if s.ndim != 3:
        raise ValueError("expected an (N, d, d) stack")
    n, d, _ = s.shape
    eye = np.eye(d, dtype=complex)
    if n == 0:
        return eye[None]
    block = max(int(np.sqrt(n)), 1)
    n_blocks = -(-n // block)
    padded = np.empty((n_blocks * block, d, d), dtype=complex)
    padded[:n] = s
    padded[n:] = eye
    padded = padded.reshape(n_blocks, block, d, d)

    inner = np.empty_like(padded)
    inner[:, 0] = padded[:, 0]
    for m in range(1, block):
        inner[:, m] = np.matmul(padded[:, m], inner[:, m - 1])

    offsets = np.empty((n_blocks, d, d), dtype=complex)
    offsets[0] = eye
    for k in range(1, n_blocks):
        offsets[k] = inner[k - 1, -1] @ offsets[k - 1]

    full = np.matmul(inner, offsets[:, None]).reshape(n_blocks * block, d, d)
    out = np.empty((n + 1, d, d), dtype=complex)
    out[0] = eye
    out[1:] = full[:n]
    return out


def unitarity_defect(u: np.ndarray) -> float:
    """max |U^dag U - I| over a matrix or stack of matrices."""
    u = np.asarray(u)
    d = u.shape[-1]
    g = np.matmul(dagger(u), u)
    g[..., range(d), range(d)] -= 1.0
    return float(np.max(np.abs(g)))
