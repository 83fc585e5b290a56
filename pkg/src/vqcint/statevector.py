"""Dense statevector simulator for small circuits.

Covers exactly what the rest of the package needs: RX/RY/RZ rotations, the
CZ entangler, the per-qubit-averaged Pauli-Z observable, and shot-noise
sampling of that observable. Rotations follow the half-angle convention
R_k(phi) = exp(-i (phi/2) sigma_k), so the shift rule holds with
coefficient 1/2 and shift pi/2.

Conventions: qubit 0 is the most significant bit of the basis-state index,
so for two qubits the amplitude order is |00>, |01>, |10>, |11>. Global
phase is not normalized away; only expectation values are contractual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import derive_rng

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATION_KINDS + ("CZ",)


@dataclass(frozen=True)
class GateOp:
    """One concrete gate: a rotation with an angle, or an angle-less CZ."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None


@dataclass(frozen=True)
class ObservableSpec:
    """Mean of the per-qubit Pauli-Z expectations; always lands in [-1, 1]."""

    kind: str = "mean_z"


MEAN_Z = ObservableSpec()


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def zero_state(n_qubits: int) -> StateVector:
    """|0...0> on n_qubits."""
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _validate_gate(gate: GateOp, n_qubits: int) -> None:
    if gate.kind not in GATE_KINDS:
        raise ValueError(f"unknown gate kind {gate.kind!r}")
    if any(not 0 <= q < n_qubits for q in gate.qubits):
        raise ValueError(f"qubit indices {gate.qubits} out of range for {n_qubits} qubits")
    if gate.kind == "CZ":
        if len(gate.qubits) != 2 or gate.qubits[0] == gate.qubits[1]:
            raise ValueError(f"CZ needs two distinct qubits, got {gate.qubits}")
        if gate.angle is not None:
            raise ValueError("CZ takes no angle")
    else:
        if len(gate.qubits) != 1:
            raise ValueError(f"{gate.kind} acts on one qubit, got {gate.qubits}")
        if gate.angle is None or not np.isfinite(gate.angle):
            raise ValueError(f"{gate.kind} needs a finite angle, got {gate.angle}")


def _rotation_batch(amps: np.ndarray, kind: str, qubit: int, angles: np.ndarray) -> None:
    """Apply one rotation with per-row angles to (batch, 2**n) amplitudes, in place."""
    b = amps.shape[0]
    view = amps.reshape(b, 1 << qubit, 2, -1)
    half = np.asarray(angles, dtype=np.float64) * 0.5
    if kind == "RZ":
        phase = np.exp(-1j * half)[:, None, None]
        view[:, :, 0, :] *= phase
        view[:, :, 1, :] *= np.conj(phase)
        return
    c = np.cos(half)[:, None, None]
    s = np.sin(half)[:, None, None]
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    if kind == "RY":
        view[:, :, 0, :] = c * a0 - s * a1
        view[:, :, 1, :] = s * a0 + c * a1
    elif kind == "RX":
        view[:, :, 0, :] = c * a0 - 1j * s * a1
        view[:, :, 1, :] = -1j * s * a0 + c * a1
    else:
        raise ValueError(f"not a rotation: {kind}")


def _cz_batch(amps: np.ndarray, q1: int, q2: int) -> None:
    """Negate the |..1..1..> amplitudes for the qubit pair, in place."""
    qa, qb = sorted((q1, q2))
    b = amps.shape[0]
    view = amps.reshape(b, 1 << qa, 2, 1 << (qb - qa - 1), 2, -1)
    view[:, :, 1, :, 1, :] *= -1.0


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Return the state after one gate; the input state is left untouched."""
    _validate_gate(gate, state.n_qubits)
    amps = state.amplitudes[None, :].astype(np.complex128, copy=True)
    if gate.kind == "CZ":
        _cz_batch(amps, *gate.qubits)
    else:
        _rotation_batch(amps, gate.kind, gate.qubits[0], np.array([gate.angle]))
    return StateVector(state.n_qubits, amps[0])


def run_circuit(gates, n_qubits: int) -> StateVector:
    """Apply an ordered gate list to |0...0>."""
    state = zero_state(n_qubits)
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def run_program_batch_trig(
    program, cos_half: np.ndarray, sin_half: np.ndarray, n_qubits: int
) -> np.ndarray:
    """Run one gate skeleton from precomputed half-angle cosines and sines.

    cos_half/sin_half have shape (batch, n_slots) holding cos(a/2), sin(a/2)
    of every bound angle. Taking trig instead of angles lets callers that
    evaluate pi/2-shifted variants of the same rows derive the shifted trig
    by exact quarter-turn identities instead of re-evaluating cos/sin over
    the whole expanded batch, which otherwise dominates training time.

    Works in a transposed (2**n, batch) layout so each basis amplitude is a
    contiguous vector; returns the conventional (batch, 2**n_qubits) array.
    """
    ch = np.ascontiguousarray(np.asarray(cos_half, dtype=np.float64).T)
    sh = np.ascontiguousarray(np.asarray(sin_half, dtype=np.float64).T)
    n_states = 2**n_qubits
    state = np.zeros((n_states, ch.shape[1]), dtype=np.complex128)
    state[0] = 1.0
    for kind, qubits, slot in program:
        if kind == "CZ":
            qa, qb = qubits
            mask = (1 << (n_qubits - 1 - qa)) | (1 << (n_qubits - 1 - qb))
            for i in range(n_states):
                if i & mask == mask:
                    state[i] *= -1.0
            continue
        off = 1 << (n_qubits - 1 - qubits[0])
        c, s = ch[slot], sh[slot]
        if kind == "RZ":
            phase = c - 1j * s
            conj = np.conj(phase)
            for i in range(n_states):
                state[i] *= conj if i & off else phase
            continue
        if kind == "RX":
            s = 1j * s
        for i in range(n_states):
            if i & off:
                continue
            a0, a1 = state[i], state[i | off]
            if kind == "RY":
                state[i], state[i | off] = c * a0 - s * a1, s * a0 + c * a1
            else:
                state[i], state[i | off] = c * a0 - s * a1, c * a1 - s * a0
    return np.ascontiguousarray(state.T)


def run_program_batch(program, angle_rows: np.ndarray, n_qubits: int) -> np.ndarray:
    """Run one gate skeleton over a batch of angle assignments.

    program is a sequence of (kind, qubits, slot) entries, slot None for CZ;
    angle_rows has shape (batch, n_slots). Returns (batch, 2**n_qubits)
    complex amplitudes, one simulated state per row starting from |0...0>.
    """
    half = 0.5 * np.asarray(angle_rows, dtype=np.float64)
    return run_program_batch_trig(program, np.cos(half), np.sin(half), n_qubits)


def _mean_z_from_probs(probs: np.ndarray, n_qubits: int) -> np.ndarray:
    b = probs.shape[0]
    total = np.zeros(b)
    for q in range(n_qubits):
        p_one = probs.reshape(b, 1 << q, 2, -1)[:, :, 1, :].sum(axis=(1, 2))
        total += 1.0 - 2.0 * p_one
    return total / n_qubits


def mean_z_batch(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    """Exact mean-Z observable for every row of a (batch, 2**n) amplitude array."""
    probs = np.abs(amps) ** 2
    return _mean_z_from_probs(probs, n_qubits)


def sampled_mean_z_batch(amps: np.ndarray, n_qubits: int, n_shots: int, seeds) -> np.ndarray:
    """Shot-sampled mean-Z per row, one independent seed per row.

    Row i reproduces sampled_expectation on that state with seed seeds[i]
    bit for bit.
    """
    probs = np.abs(amps) ** 2
    probs /= probs.sum(axis=1, keepdims=True)
    out = np.empty(probs.shape[0])
    for i, seed in enumerate(seeds):
        counts = derive_rng(seed).multinomial(n_shots, probs[i])
        out[i] = _mean_z_from_probs((counts / n_shots)[None, :], n_qubits)[0]
    return out


def expectation(state: StateVector, obs: ObservableSpec = MEAN_Z) -> float:
    """Exact (1/n) sum_i <sigma_z^(i)> of the state."""
    del obs  # single observable kind supported
    probs = np.abs(state.amplitudes) ** 2
    return float(_mean_z_from_probs(probs[None, :], state.n_qubits)[0])


def sampled_expectation(
    state: StateVector, obs: ObservableSpec = MEAN_Z, n_shots: int = 0, seed: int = 0
) -> float:
    """Estimate the observable from n_shots sampled bitstrings.

    n_shots = 0 is the exact-simulation sentinel and returns expectation()
    unchanged. Sampling draws whole bitstrings from |amplitudes|^2, so all
    per-qubit estimates share one set of shots; the result is reproducible
    given the seed.
    """
    if n_shots < 0:
        raise ValueError(f"n_shots must be >= 0, got {n_shots}")
    if n_shots == 0:
        return expectation(state, obs)
    return float(
        sampled_mean_z_batch(state.amplitudes[None, :], state.n_qubits, n_shots, [seed])[0]
    )
