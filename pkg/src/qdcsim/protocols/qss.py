"""((2,3)) threshold quantum secret sharing on qutrits.

Share ``k`` (k = 0, 1, 2) of the code word for secret digit ``s`` holds
``j + k*s mod 3`` summed over ``j``:

    |s> -> (|0, s, 2s> + |1, 1+s, 1+2s> + |2, 2+s, 2+2s>) / sqrt(3)

Any two shares determine ``s`` through a linear bijection on Z_3 x Z_3; any
single share is maximally mixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import core
from ..core import GateOp, PureState, RegisterLayout

K, N_SHARES = 2, 3


class SecretSharingError(ValueError):
    pass


@dataclass(frozen=True)
class QssParams:
    k: int = K
    n: int = N_SHARES

    def __post_init__(self):
        if not (1 <= self.k <= self.n and self.n < 2 * self.k):
            raise SecretSharingError(f"(({self.k},{self.n})) violates n < 2k")
        if (self.k, self.n) != (K, N_SHARES):
            raise SecretSharingError("only the ((2,3)) qutrit code is implemented")


def share_layout() -> RegisterLayout:
    return RegisterLayout.from_segments(("S1", [3]), ("S2", [3]), ("S3", [3]))


def encoding_unitary() -> np.ndarray:
    """27x27 unitary with V|s,0,0> equal to the code word of s.

    V|s, t, u> = sum_j w^(u j) |j, j+s, j+2s+t> / sqrt(3), w = exp(2 pi i/3).
    """
    omega = np.exp(2j * math.pi / 3)
    v = np.zeros((27, 27), dtype=complex)
    for s in range(3):
        for t in range(3):
            for u in range(3):
                col = s + 3 * t + 9 * u
                for j in range(3):
                    row = j + 3 * ((j + s) % 3) + 9 * ((j + 2 * s + t) % 3)
                    v[row, col] += omega ** (u * j) / math.sqrt(3)
    return v


_ENCODER = encoding_unitary()


def _check_secret(secret) -> np.ndarray:
    vec = np.asarray(secret, dtype=complex).reshape(-1)
    if vec.shape != (3,):
        raise SecretSharingError("secret must be a qutrit state (3 amplitudes)")
    if abs(np.linalg.norm(vec) - 1) > core.ATOL:
        raise SecretSharingError("secret must be normalized")
    return vec


def qss_encode(secret) -> PureState:
    """Encode a qutrit secret into three qutrit shares (sites 0, 1, 2 = S1, S2, S3)."""
    vec = _check_secret(secret)
    layout = share_layout()
    state = PureState.from_vector(layout, np.kron([1, 0, 0], np.kron([1, 0, 0], vec)))
    return core.apply_gate(state, GateOp((0, 1, 2), _ENCODER, "QSS_ENC"))


def decoding_gate(first: int, second: int, sites: tuple[int, int]) -> GateOp:
    """Permutation on two shares (0-based indices ``first < second``).

    Maps (v_first, v_second) to (s, v_missing): the secret digit lands on the
    first site and the second site becomes a copy of the missing share.
    """
    if first == second or not (0 <= first < 3 and 0 <= second < 3):
        raise SecretSharingError("need two distinct share indices")
    if first > second:
        first, second = second, first
        sites = (sites[1], sites[0])
    missing = 3 - first - second
    inv = {1: 1, 2: 2}[(second - first) % 3]
    perm = [0] * 9
    for v1 in range(3):
        for v2 in range(3):
            s = ((v2 - v1) * inv) % 3
            j = (v1 - first * s) % 3
            v3 = (j + missing * s) % 3
            perm[v1 + 3 * v2] = s + 3 * v3
    return GateOp(sites, core.permutation_matrix(perm), f"QSS_DEC{first}{second}")


def qss_reconstruct(state: PureState, share_sites: Mapping[int, int]) -> PureState:
    """Recover the secret from exactly two shares.

    ``share_sites`` maps 1-based share index to the site holding it.  Returns
    the secret as a one-qutrit PureState (global phase fixed so the largest
    amplitude is real and positive).
    """
    if len(share_sites) < K:
        raise SecretSharingError("need k = 2 shares to reconstruct")
    if len(share_sites) != K:
        raise SecretSharingError("give exactly two shares")
    (i1, s1), (i2, s2) = sorted(share_sites.items())
    if s1 == s2:
        raise SecretSharingError("share sites must be distinct")
    for s in (s1, s2):
        if state.layout.dims[s] != 3:
            raise SecretSharingError(f"site {s} is not a qutrit")
    decoded = core.apply_gate(state, decoding_gate(i1 - 1, i2 - 1, (s1, s2)))
    rho = core.reduced_density(decoded, [s1])
    evals, evecs = np.linalg.eigh(rho)
    if evals[-1] < 1 - 1e-8:
        raise SecretSharingError("decoded qutrit is not pure; shares were not a code word")
    vec = evecs[:, -1]
    vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
    return PureState.from_vector(RegisterLayout.from_segments(("secret", [3])), vec, normalize=True)


def share_density(state: PureState, site: int) -> np.ndarray:
    return core.reduced_density(state, [site])


def random_qutrit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    return v / np.linalg.norm(v)


# qutrit <-> two-qubit embedding used to cross the qubit-only teleporter
EMBED = {0: 0b00, 1: 0b01, 2: 0b10}


def embed_qutrits(state: PureState, sites) -> PureState:
    """Replace each qutrit at ``sites`` by two qubits (|0>->|00>, |1>->|01>, |2>->|10>).

    The low qubit of the pair takes the original site position's segment
    slot; new layout keeps site order with each qutrit expanded in place.
    """
    sites = set(sites)
    dims = state.layout.dims
    new_dims: list[int] = []
    where: dict[int, list[int]] = {}
    for s, d in enumerate(dims):
        if s in sites:
            if d != 3:
                raise SecretSharingError(f"site {s} is not a qutrit")
            where[s] = [len(new_dims), len(new_dims) + 1]
            new_dims += [2, 2]
        else:
            where[s] = [len(new_dims)]
            new_dims.append(d)
    segs = {name: tuple(t for s in ss for t in where[s]) for name, ss in state.layout.segments.items()}
    layout = RegisterLayout(tuple(new_dims), segs)
    out = np.zeros(layout.total_dim, dtype=complex)
    for idx in np.flatnonzero(np.abs(state.amplitudes) > 0):
        digits = state.layout.digits(int(idx))
        new = []
        for s, dgt in enumerate(digits):
            if s in sites:
                code = EMBED[dgt]
                new += [code & 1, code >> 1]
            else:
                new.append(dgt)
        out[layout.index(new)] = state.amplitudes[idx]
    return PureState(layout, out)


def unembed_qubits(state: PureState, pairs) -> PureState:
    """Inverse of :func:`embed_qutrits`: each (low, high) qubit pair becomes a qutrit.

    The qutrit takes the low qubit's position.  Population on |11> raises.
    """
    pairs = [tuple(p) for p in pairs]
    high = {hq for _, hq in pairs}
    low = {lq: hq for lq, hq in pairs}
    decode = {v: k for k, v in EMBED.items()}
    dims = state.layout.dims
    keep = [s for s in range(len(dims)) if s not in high]
    remap = {s: i for i, s in enumerate(keep)}
    new_dims = tuple(3 if s in low else dims[s] for s in keep)
    segs = {}
    for name, ss in state.layout.segments.items():
        left = tuple(remap[s] for s in ss if s in remap)
        if left:
            segs[name] = left
    layout = RegisterLayout(new_dims, segs)
    out = np.zeros(layout.total_dim, dtype=complex)
    leak = 0.0
    for idx in np.flatnonzero(np.abs(state.amplitudes) > 0):
        digits = state.layout.digits(int(idx))
        amp = state.amplitudes[idx]
        new = []
        ok = True
        for s in keep:
            if s in low:
                code = digits[s] | (digits[low[s]] << 1)
                if code not in decode:
                    ok = False
                    break
                new.append(decode[code])
            else:
                new.append(digits[s])
        if ok:
            out[layout.index(new)] += amp
        else:
            leak += abs(amp) ** 2
    if leak > core.ATOL:
        raise SecretSharingError(f"population {leak:.3g} outside the qutrit embedding")
    return PureState(layout, out)
