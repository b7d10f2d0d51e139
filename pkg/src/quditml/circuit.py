"""Data re-uploading circuit architectures, forward passes, and exact gradients.

Three single-qudit layer structures are supported, each repeated for a
configurable number of layers acting on |0>:

* ``euler``      - alternating x/z input rotations (axis x first, one rotation
  per input component), followed by trainable x, z, x rotations and an
  optional one-axis-twisting gate.
* ``simplified`` - a single exponential per layer whose exponent sums the
  angular momentum operators (cycling x, z, y over input slots) with
  coefficients theta_j + omega_j * x_j, plus an optional twisting term.
* ``extended``   - the simplified data terms plus one trainable coefficient
  for every level-0-coupling operator, replacing the twisting term.

Flat parameter layout, per layer (layers are concatenated in order):

* euler:      [omega_1..omega_D, theta_1, theta_2, theta_3, (theta_sq)]
* simplified: [theta_1..theta_D, omega_1..omega_D, (theta_sq)]
* extended:   [theta_1..theta_D, omega_1..omega_D, phi_1..phi_{2(d-1)}]

Gradients are computed by a reverse (adjoint) sweep over the cached layer
unitaries. Single-generator rotations differentiate as -i G U; summed
exponentials use the divided-difference rule in the exponent's eigenbasis.
Both paths are exact up to rounding and are validated against finite
differences in the test suite.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qudit import (
    GeneratorMatrix,
    QuditState,
    angular_momentum,
    extended_operators,
    randomized_ladder,
    squeezing_generator,
)

ARCHITECTURES = ("euler", "simplified", "extended")

# Divided differences below this eigenvalue gap switch to the analytic limit.
_DEGENERACY_GAP = 1e-9


@dataclass(frozen=True)
class CircuitSpec:
    """Architecture of a single-qudit re-uploading circuit.

    ``encoding_permutation`` rewires the x ladder operator used by the input
    encoding through the given level permutation; None keeps the standard
    ladder. The twisting term is dropped entirely (not fixed at zero) when
    ``squeeze`` is False; the extended architecture never has one.
    """

    d: int
    input_dim: int
    layers: int
    arch: str = "euler"
    squeeze: bool = True
    encoding_permutation: tuple = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.encoding_permutation is not None:
            perm = tuple(int(p) for p in self.encoding_permutation)
            if sorted(perm) != list(range(self.d)):
                raise ValueError(f"encoding_permutation {perm!r} is not a bijection on 0..{self.d - 1}")
            object.__setattr__(self, "encoding_permutation", perm)


@dataclass(frozen=True)
class LayerParams:
    """Structured view of one layer's slice of the flat parameter vector."""

    encoding_weights: np.ndarray
    rotation_angles: np.ndarray
    squeeze_angle: float = None
    coupling_angles: np.ndarray = None


def layer_param_count(spec: CircuitSpec) -> int:
    """Number of trainable parameters in a single layer."""
    D = spec.input_dim
    if spec.arch == "euler":
        return D + (4 if spec.squeeze else 3)
    if spec.arch == "simplified":
        return 2 * D + (1 if spec.squeeze else 0)
    return 2 * D + 2 * (spec.d - 1)


def param_count(spec: CircuitSpec) -> int:
    """Total number of trainable parameters of the circuit."""
    return layer_param_count(spec) * spec.layers


def unpack(spec: CircuitSpec, params) -> tuple:
    """Split a flat parameter vector into per-layer LayerParams."""
    params = _check_params(spec, params)
    D = spec.input_dim
    per = layer_param_count(spec)
    out = []
    for layer in range(spec.layers):
        seg = params[layer * per : (layer + 1) * per]
        if spec.arch == "euler":
            out.append(
                LayerParams(
                    encoding_weights=seg[:D].copy(),
                    rotation_angles=seg[D : D + 3].copy(),
                    squeeze_angle=float(seg[D + 3]) if spec.squeeze else None,
                )
            )
        elif spec.arch == "simplified":
            out.append(
                LayerParams(
                    encoding_weights=seg[D : 2 * D].copy(),
                    rotation_angles=seg[:D].copy(),
                    squeeze_angle=float(seg[2 * D]) if spec.squeeze else None,
                )
            )
        else:
            out.append(
                LayerParams(
                    encoding_weights=seg[D : 2 * D].copy(),
                    rotation_angles=seg[:D].copy(),
                    coupling_angles=seg[2 * D :].copy(),
                )
            )
    return tuple(out)


def pack(spec: CircuitSpec, layers) -> np.ndarray:
    """Inverse of unpack: flatten per-layer LayerParams back into a vector."""
    layers = tuple(layers)
    if len(layers) != spec.layers:
        raise ValueError(f"expected {spec.layers} layers, got {len(layers)}")
    D = spec.input_dim
    parts = []
    for lp in layers:
        ew = np.asarray(lp.encoding_weights, dtype=float)
        ra = np.asarray(lp.rotation_angles, dtype=float)
        if ew.shape != (D,):
            raise ValueError("encoding_weights must have length input_dim")
        if spec.arch == "euler":
            if ra.shape != (3,):
                raise ValueError("euler layers carry exactly 3 rotation angles")
            parts.append(ew)
            parts.append(ra)
            if spec.squeeze:
                parts.append(np.array([lp.squeeze_angle], dtype=float))
        elif spec.arch == "simplified":
            if ra.shape != (D,):
                raise ValueError("simplified layers carry input_dim rotation angles")
            parts.append(ra)
            parts.append(ew)
            if spec.squeeze:
                parts.append(np.array([lp.squeeze_angle], dtype=float))
        else:
            ca = np.asarray(lp.coupling_angles, dtype=float)
            if ra.shape != (D,) or ca.shape != (2 * (spec.d - 1),):
                raise ValueError("extended layer slices have the wrong length")
            parts.append(ra)
            parts.append(ew)
            parts.append(ca)
    return np.concatenate(parts)


class _Context:
    """Resolved generator set for a spec (possibly in an embedded state space)."""

    __slots__ = ("dim", "euler_enc", "euler_w", "squeeze_gen", "slot_gens", "sum_stack", "n_sum")

    def __init__(self, spec: CircuitSpec, table: dict):
        gx, gy, gz = table["x"], table["y"], table["z"]
        self.dim = gx.d
        enc_x = table.get("ladder_x", gx)
        D = spec.input_dim
        self.squeeze_gen = table["sq"] if spec.squeeze and spec.arch != "extended" else None
        if spec.arch == "euler":
            self.euler_enc = [enc_x if j % 2 == 0 else gz for j in range(D)]
            self.euler_w = [gx, gz, gx]
            self.slot_gens = None
            self.sum_stack = None
            self.n_sum = 0
        else:
            cycle = [enc_x, gz, gy]
            self.euler_enc = None
            self.euler_w = None
            self.slot_gens = [cycle[j % 3] for j in range(D)]
            stack = [g.matrix for g in self.slot_gens]
            if spec.arch == "simplified":
                if self.squeeze_gen is not None:
                    stack.append(self.squeeze_gen.matrix)
            else:
                stack.extend(g.matrix for g in table["ext"])
            self.sum_stack = np.array(stack)
            self.n_sum = len(stack)


def build_context(spec: CircuitSpec, table: dict = None) -> _Context:
    """Resolve a spec's generator set; ``table`` substitutes alternative operators.

    A table maps 'x', 'y', 'z', 'sq' (and optionally 'ladder_x', 'ext') to
    GeneratorMatrix values sharing one dimension. Without a table the
    spec.d-dimensional spin operators are used. Substituted tables must cover
    every operator the spec needs (e.g. 'ext' for the extended architecture).
    """
    if table is None:
        return _default_context(spec)
    if spec.encoding_permutation is not None and "ladder_x" not in table:
        raise ValueError("generator table does not provide a permuted encoding ladder")
    if spec.arch == "extended" and "ext" not in table:
        raise ValueError("generator table does not provide the extended operator set")
    return _Context(spec, table)


@lru_cache(maxsize=128)
def _default_context(spec: CircuitSpec) -> _Context:
    d = spec.d
    table = {
        "x": angular_momentum(d, "x"),
        "y": angular_momentum(d, "y"),
        "z": angular_momentum(d, "z"),
        "sq": squeezing_generator(d),
    }
    if spec.encoding_permutation is not None:
        table["ladder_x"] = randomized_ladder(d, spec.encoding_permutation)
    if spec.arch == "extended":
        table["ext"] = extended_operators(d)
    return _Context(spec, table)


def _check_params(spec, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    expected = param_count(spec)
    if params.shape != (expected,):
        raise ValueError(f"parameter vector has shape {params.shape}, expected ({expected},)")
    return params


def _check_inputs(spec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must have shape (N, {spec.input_dim}), got {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one input sample")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    return X


def _phase_apply_batch(gen: GeneratorMatrix, angles: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply exp(-i angle_n G) to each row n of states."""
    if gen.is_diagonal:
        return states * np.exp(-1j * np.outer(angles, gen.diag))
    w, v = gen.eigensystem()
    y = states @ v.conj()
    y *= np.exp(-1j * np.outer(angles, w))
    return y @ v.T


def _phase_apply_shared(gen: GeneratorMatrix, theta: float, states: np.ndarray) -> np.ndarray:
    """Apply exp(-i theta G) with one shared angle to every row of states."""
    if gen.is_diagonal:
        return states * np.exp(-1j * theta * gen.diag)
    w, v = gen.eigensystem()
    u = (v * np.exp(-1j * theta * w)) @ v.conj().T
    return states @ u.T


def _coupling_response(gen: GeneratorMatrix, post: np.ndarray, adj: np.ndarray) -> np.ndarray:
    """Per-sample 2*Im(<adj| G |post>), the sensitivity of a rotation angle."""
    if gen.is_diagonal:
        t = post * gen.diag
    else:
        t = post @ gen.matrix.T
    return 2.0 * np.sum(np.conj(adj) * t, axis=1).imag


def _dk_phi(w: np.ndarray) -> np.ndarray:
    """Divided-difference table of exp(-i w) over all eigenvalue pairs."""
    ew = np.exp(-1j * w)
    dw = w[..., :, None] - w[..., None, :]
    small = np.abs(dw) < _DEGENERACY_GAP
    num = ew[..., :, None] - ew[..., None, :]
    phi = num / np.where(small, 1.0, dw)
    limit = -1j * np.exp(-0.5j * (w[..., :, None] + w[..., None, :]))
    return np.where(small, limit, phi)


class _ForwardCache:
    __slots__ = ("ctx", "records", "states")

    def __init__(self, ctx, records, states):
        self.ctx = ctx
        self.records = records
        self.states = states


def _run_forward(ctx: _Context, spec: CircuitSpec, params, X, record: bool):
    n = X.shape[0]
    D = spec.input_dim
    per = layer_param_count(spec)
    states = np.zeros((n, ctx.dim), dtype=complex)
    states[:, 0] = 1.0
    records = [] if record else None
    for layer in range(spec.layers):
        off = layer * per
        if spec.arch == "euler":
            for j in range(D):
                gen = ctx.euler_enc[j]
                angles = X[:, j] * params[off + j]
                states = _phase_apply_batch(gen, angles, states)
                if record:
                    records.append(("rot", gen, angles, off + j, j, states))
            for m, gen in enumerate(ctx.euler_w):
                theta = params[off + D + m]
                states = _phase_apply_shared(gen, theta, states)
                if record:
                    records.append(("rot", gen, theta, off + D + m, None, states))
            if ctx.squeeze_gen is not None:
                theta = params[off + D + 3]
                states = _phase_apply_shared(ctx.squeeze_gen, theta, states)
                if record:
                    records.append(("rot", ctx.squeeze_gen, theta, off + D + 3, None, states))
        else:
            coeffs = np.empty((n, ctx.n_sum))
            coeffs[:, :D] = params[off : off + D] + X * params[off + D : off + 2 * D]
            coeffs[:, D:] = params[off + 2 * D : off + per]
            exponent = np.tensordot(coeffs, ctx.sum_stack, axes=([1], [0]))
            w, v = np.linalg.eigh(exponent)
            pre = states
            z = np.matmul(v.conj().transpose(0, 2, 1), states[:, :, None])[:, :, 0]
            z *= np.exp(-1j * w)
            states = np.matmul(v, z[:, :, None])[:, :, 0]
            if record:
                records.append(("sum", w, v, pre, off))
    return states, (_ForwardCache(ctx, records, states) if record else None)


def _run_backward(spec: CircuitSpec, params, X, cache: _ForwardCache, loss_gradients) -> np.ndarray:
    ctx = cache.ctx
    D = spec.input_dim
    per = layer_param_count(spec)
    grads = np.zeros(param_count(spec))
    adj = np.asarray(loss_gradients, dtype=complex)
    if adj.shape != cache.states.shape:
        raise ValueError(f"loss gradient has shape {adj.shape}, expected {cache.states.shape}")
    for rec in reversed(cache.records):
        if rec[0] == "rot":
            _, gen, angles, pidx, data_col, post = rec
            s = _coupling_response(gen, post, adj)
            if data_col is None:
                grads[pidx] += s.sum()
                adj = _phase_apply_shared(gen, -angles, adj)
            else:
                grads[pidx] += s @ X[:, data_col]
                adj = _phase_apply_batch(gen, -angles, adj)
        else:
            _, w, v, pre, off = rec
            v_dag = v.conj().transpose(0, 2, 1)
            bt = np.matmul(v_dag, adj[:, :, None])[:, :, 0]
            pt = np.matmul(v_dag, pre[:, :, None])[:, :, 0]
            core = _dk_phi(w) * (np.conj(bt)[:, :, None] * pt[:, None, :])
            m = np.matmul(v_dag[:, None], np.matmul(ctx.sum_stack[None], v[:, None]))
            vals = 2.0 * np.real(np.sum(core[:, None] * m, axis=(-2, -1)))
            grads[off : off + D] += vals[:, :D].sum(axis=0)
            grads[off + D : off + 2 * D] += np.sum(vals[:, :D] * X, axis=0)
            if ctx.n_sum > D:
                grads[off + 2 * D : off + per] += vals[:, D:].sum(axis=0)
            adj = np.matmul(v, (np.exp(1j * w) * bt)[:, :, None])[:, :, 0]
    return grads


def forward_batch(spec: CircuitSpec, params, X) -> np.ndarray:
    """Output amplitudes, one row per input sample (shape (N, d))."""
    params = _check_params(spec, params)
    X = _check_inputs(spec, X)
    states, _ = _run_forward(build_context(spec), spec, params, X, record=False)
    return states


def forward(spec: CircuitSpec, params, x) -> QuditState:
    """Run the circuit on a single input vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return QuditState(forward_batch(spec, params, x[None, :])[0])


def forward_with_cache(spec: CircuitSpec, params, X):
    """Batched forward pass that also returns the cache a backward sweep needs."""
    params = _check_params(spec, params)
    X = _check_inputs(spec, X)
    states, cache = _run_forward(build_context(spec), spec, params, X, record=True)
    return states, cache


def gradient_from_cache(spec: CircuitSpec, params, X, cache, loss_gradients) -> np.ndarray:
    """Parameter gradient from a cached forward pass, summed over the batch.

    ``loss_gradients`` holds one row per sample: the derivative of the (real)
    loss with respect to the conjugated output amplitudes. The result is
    dLoss/dp = 2 Re <loss_grad | dpsi/dp> accumulated over samples.
    """
    params = _check_params(spec, params)
    X = _check_inputs(spec, X)
    return _run_backward(spec, params, X, cache, loss_gradients)


def gradient_batch(spec: CircuitSpec, params, X, loss_gradients) -> np.ndarray:
    """Forward + reverse sweep in one call; see gradient_from_cache for conventions."""
    params = _check_params(spec, params)
    X = _check_inputs(spec, X)
    _, cache = _run_forward(build_context(spec), spec, params, X, record=True)
    return _run_backward(spec, params, X, cache, loss_gradients)


def gradient(spec: CircuitSpec, params, x, loss_gradient) -> np.ndarray:
    """Gradient of a real loss for one sample, given dLoss/d(conj amplitudes)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lg = np.asarray(loss_gradient, dtype=complex)
    return gradient_batch(spec, params, x[None, :], lg[None, :])


def output_spectrum(spec: CircuitSpec, params, grid_size: int) -> list:
    """Discrete Fourier magnitudes of the expected-label curve over [-pi, pi).

    Only defined for one-dimensional inputs; the grid size must be a power of
    two >= 64 so integer frequencies fall on exact bins. Returns (frequency,
    magnitude) pairs for frequencies 0..grid_size/2.
    """
    if spec.input_dim != 1:
        raise ValueError("output_spectrum requires input_dim == 1")
    if grid_size < 64 or grid_size & (grid_size - 1) != 0:
        raise ValueError("grid_size must be a power of two >= 64")
    x = -np.pi + 2.0 * np.pi * np.arange(grid_size) / grid_size
    amps = forward_batch(spec, params, x[:, None])
    expectation = (np.abs(amps) ** 2) @ np.arange(spec.d, dtype=float)
    coefs = np.fft.rfft(expectation) / grid_size
    return [(float(f), float(abs(c))) for f, c in enumerate(coefs)]
