"""d-level quantum states, Hermitian generators, and exact unitary gates.

A d-level system is treated as a spin with total angular momentum
(d-1)/2: basis index k corresponds to the spin projection (2k-d+1)/2, in
ascending order, so index 0 is the most-negative projection. All gates are
synthesized by exponentiating Hermitian generators through their
eigendecomposition, which keeps them unitary to rounding and lets the
eigenbasis be reused for gradient rules downstream.

Everything here is immutable after construction and safe to share across
threads; generator eigendecompositions are cached lazily (idempotent).
"""

import math

import numpy as np

HERMITICITY_TOL = 1e-14
UNITARITY_TOL = 1e-12
NORM_TOL = 1e-12


class QuditState:
    """Unit-norm complex amplitude vector over d basis levels."""

    def __init__(self, amplitudes):
        amps = np.array(amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size < 2:
            raise ValueError("amplitudes must be a 1-d sequence of length >= 2")
        if abs(np.sum(np.abs(amps) ** 2) - 1.0) > NORM_TOL:
            raise ValueError("state is not normalized within 1e-12")
        amps.setflags(write=False)
        self.amplitudes = amps
        self.d = amps.size

    @classmethod
    def basis(cls, d: int, k: int) -> "QuditState":
        """The computational basis state |k> of a d-level system."""
        if not 0 <= k < d:
            raise ValueError(f"basis index {k} out of range for d={d}")
        amps = np.zeros(d, dtype=complex)
        amps[k] = 1.0
        return cls(amps)

    def __repr__(self):
        return f"QuditState(d={self.d})"


class GeneratorMatrix:
    """Hermitian d x d matrix with a lazily cached eigendecomposition."""

    def __init__(self, matrix):
        mat = np.array(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("generator must be a square matrix")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITICITY_TOL:
            raise ValueError("generator is not Hermitian within 1e-14")
        mat.setflags(write=False)
        self.matrix = mat
        self.d = mat.shape[0]
        # Diagonal generators admit a cheap phase-multiplication gate path.
        self.is_diagonal = bool(np.all(mat == np.diag(np.diagonal(mat))))
        self.diag = np.real(np.diagonal(mat)).copy() if self.is_diagonal else None
        if self.diag is not None:
            self.diag.setflags(write=False)
        self._eig = None

    def eigensystem(self):
        """Eigenvalues (ascending) and eigenvector matrix V with A = V diag(w) V†."""
        if self._eig is None:
            if self.is_diagonal:
                order = np.argsort(self.diag, kind="stable")
                w = self.diag[order].copy()
                v = np.eye(self.d, dtype=complex)[:, order]
            else:
                w, v = np.linalg.eigh(self.matrix)
            w.setflags(write=False)
            v.setflags(write=False)
            self._eig = (w, v)
        return self._eig

    def __repr__(self):
        return f"GeneratorMatrix(d={self.d})"


class UnitaryGate:
    """Unitary d x d matrix acting on QuditState amplitudes."""

    def __init__(self, matrix):
        mat = np.array(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("gate must be a square matrix")
        dev = np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])))
        if dev > UNITARITY_TOL:
            raise ValueError(f"gate is not unitary within 1e-12 (deviation {dev:.2e})")
        mat.setflags(write=False)
        self.matrix = mat
        self.d = mat.shape[0]

    def __repr__(self):
        return f"UnitaryGate(d={self.d})"


def ladder_weights(d: int) -> np.ndarray:
    """Coupling magnitudes between adjacent levels: sqrt((d-k-1)(k+1)), k=0..d-2."""
    k = np.arange(d - 1)
    return np.sqrt((d - k - 1.0) * (k + 1.0))


def level_projections(d: int) -> np.ndarray:
    """Spin projection of each level: (2k-d+1)/2 for k=0..d-1, ascending."""
    return (2.0 * np.arange(d) - d + 1.0) / 2.0


def angular_momentum(d: int, axis: str) -> GeneratorMatrix:
    """Spin-(d-1)/2 angular momentum operator along x, y, or z.

    Upper triangle is built explicitly and mirrored (conjugated) so the
    matrix is exactly Hermitian: <k+1| along x is half the ladder weight,
    along y it is -i/2 times it; z is diagonal with the level projections.
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")
    if axis == "z":
        return GeneratorMatrix(np.diag(level_projections(d)).astype(complex))
    gamma = ladder_weights(d)
    mat = np.zeros((d, d), dtype=complex)
    if axis == "x":
        upper = 0.5 * gamma
    elif axis == "y":
        upper = -0.5j * gamma
    else:
        raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")
    idx = np.arange(d - 1)
    mat[idx + 1, idx] = upper
    mat[idx, idx + 1] = np.conj(upper)
    return GeneratorMatrix(mat)


def squeezing_generator(d: int) -> GeneratorMatrix:
    """One-axis twisting generator: square of the z angular momentum (diagonal)."""
    if d < 2:
        raise ValueError("dimension must be >= 2")
    return GeneratorMatrix(np.diag(level_projections(d) ** 2).astype(complex))


def extended_operators(d: int) -> list:
    """Level-0-coupling operator family, ordered X_1, Y_1, X_2, Y_2, ...

    X_j is the population-difference operator |0><0| - |j><j|; Y_j is the
    real coupling |0><j| + |j><0|, for j = 1..d-1.
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")
    ops = []
    for j in range(1, d):
        xj = np.zeros((d, d), dtype=complex)
        xj[0, 0] = 1.0
        xj[j, j] = -1.0
        yj = np.zeros((d, d), dtype=complex)
        yj[0, j] = 1.0
        yj[j, 0] = 1.0
        ops.append(GeneratorMatrix(xj))
        ops.append(GeneratorMatrix(yj))
    return ops


def randomized_ladder(d: int, permutation) -> GeneratorMatrix:
    """The x ladder operator rewired through a permuted level ordering.

    Entry <P(k+1)| . |P(k)> carries half the ladder weight for level k (with
    the conjugate mirror), so the identity permutation reproduces
    angular_momentum(d, 'x') exactly and any permutation is similar to it.
    """
    perm = tuple(int(p) for p in permutation)
    if sorted(perm) != list(range(d)):
        raise ValueError(f"permutation {perm!r} is not a bijection on 0..{d - 1}")
    gamma = ladder_weights(d)
    mat = np.zeros((d, d), dtype=complex)
    for k in range(d - 1):
        a, b = perm[k + 1], perm[k]
        mat[a, b] += 0.5 * gamma[k]
        mat[b, a] += 0.5 * gamma[k]
    return GeneratorMatrix(mat)


def rotation(gen: GeneratorMatrix, theta: float) -> UnitaryGate:
    """exp(-i theta G) through the generator's cached eigendecomposition."""
    w, v = gen.eigensystem()
    phases = np.exp(-1j * theta * w)
    return UnitaryGate((v * phases) @ v.conj().T)


def exp_weighted_sum(gens, coeffs) -> UnitaryGate:
    """exp(-i sum_m c_m G_m) for real coefficients over shared-dimension generators.

    The weighted sum is assembled and eigendecomposed freshly on every call;
    it changes with the coefficients, so nothing is cached.
    """
    gens = list(gens)
    coeffs = np.asarray(coeffs, dtype=float)
    if len(gens) == 0 or coeffs.shape != (len(gens),):
        raise ValueError("need equally many generators and coefficients (>= 1)")
    d = gens[0].d
    if any(g.d != d for g in gens):
        raise ValueError("generators have mismatched dimensions")
    total = np.zeros((d, d), dtype=complex)
    for c, g in zip(coeffs, gens):
        total += c * g.matrix
    w, v = np.linalg.eigh(total)
    return UnitaryGate((v * np.exp(-1j * w)) @ v.conj().T)


def apply(gate: UnitaryGate, state: QuditState) -> QuditState:
    """Apply a gate to a state, returning the new state."""
    if gate.d != state.d:
        raise ValueError(f"gate dimension {gate.d} != state dimension {state.d}")
    return QuditState(gate.matrix @ state.amplitudes)


def spin_coherent_state(d: int, polar: float, azimuth: float) -> QuditState:
    """Spin coherent state pointing along (polar, azimuth) on the Bloch sphere.

    Amplitude on level k is sqrt(C(d-1,k)) cos(polar/2)^(d-1-k)
    (sin(polar/2) e^{i azimuth})^k; polar=0 gives |0>, polar=pi gives |d-1>
    up to phase.
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")
    n = d - 1
    k = np.arange(d)
    binom = np.array([math.comb(n, int(kk)) for kk in k], dtype=float)
    mag = np.sqrt(binom) * np.cos(polar / 2.0) ** (n - k) * np.sin(polar / 2.0) ** k
    amps = mag * np.exp(1j * azimuth * k)
    norm = np.sqrt(np.sum(np.abs(amps) ** 2))
    return QuditState(amps / norm)
