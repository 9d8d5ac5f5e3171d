"""Monte-Carlo round engines in twin numba / pure-numpy implementations.

The protocol layer reduces one round to a fixed sequence of categorical
draws over precomputed tables (emission, outbound loss, Alice's action and
branch, Eve's return behaviour, return loss, Bob's detector pattern).  The
numba path jit-compiles a sequential loop over rounds; the numpy path
evaluates the same stages with vectorized gathers.  Both take identical
branch decisions from identical floats, so results match bit for bit
across backends, chunk sizes and worker counts.

Backend selection: SQKDSIM_BACKEND=numpy forces the fallback, =numba
insists on the jit path; default is numba when importable.

Randomness: uniform ``u[i, j]`` is the ``(i * SLOTS + j)``-th double of the
Philox-4x64 stream keyed by the run seed, so round ``i`` owns a fixed
counter block no matter how rounds are split over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


SLOTS = 10

#: pattern codes mirrored across the two modes, code = 3*first + second
MIRROR_CODE = np.array([3 * (c % 3) + c // 3 for c in range(9)], dtype=np.int8)


def active_backend(override: Optional[str] = None) -> str:
    choice = (override or os.environ.get("SQKDSIM_BACKEND", "")).strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("SQKDSIM_BACKEND=numba but numba is not importable")
        return "numba"
    if choice:
        raise ValueError(f"unknown backend {choice!r} (use 'numba' or 'numpy')")
    return "numba" if NUMBA_AVAILABLE else "numpy"


def round_uniforms(seed: int, rounds: int) -> np.ndarray:
    """Counter-based per-round uniforms; row i is round i's private stream."""
    key = np.uint64(int(seed) % 2 ** 64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random((rounds, SLOTS))


def _chunk_ranges(n: int, jobs: int):
    jobs = max(1, min(jobs, n)) if n else 1
    step = -(-n // jobs)
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)]


def _run_chunks(worker, n: int, jobs: int) -> None:
    ranges = _chunk_ranges(n, jobs)
    if len(ranges) == 1:
        worker(*ranges[0])
        return
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        list(pool.map(lambda r: worker(*r), ranges))


# ---------------------------------------------------------------------------
# classical-Alice rounds


@dataclass
class CaTables:
    """Flattened branch tables for the two-way protocol round walk."""
    emission_cum: np.ndarray     # (E,)
    emission_kind: np.ndarray    # (E,) 0 = x pulse, 1 = z bit 0, 2 = z bit 1
    oloss_off: np.ndarray        # (E+1,)
    oloss_cum: np.ndarray
    oloss_node: np.ndarray       # -> outbound node
    sift_off: np.ndarray         # (O+1,)
    sift_cum: np.ndarray
    sift_readout: np.ndarray     # pattern code of Alice's readout
    sift_next: np.ndarray        # -> residual node
    ctrl_next: np.ndarray        # (O,) -> residual node
    ret_off: np.ndarray          # (R+1,)
    ret_cum: np.ndarray
    ret_next: np.ndarray         # -> returned node
    ret_guess: np.ndarray        # Eve's action guess (-1 none, 0 sift, 1 ctrl)
    ret_evebit: np.ndarray       # bit Eve measured on the way back (-1 none)
    rloss_off: np.ndarray        # (G+1,)
    rloss_cum: np.ndarray
    rloss_node: np.ndarray       # -> measured node
    bobz_off: np.ndarray         # (M+1,)
    bobz_cum: np.ndarray
    bobz_pat: np.ndarray
    bobx_off: np.ndarray
    bobx_cum: np.ndarray
    bobx_pat: np.ndarray
    test_fraction: float
    cross_fraction: float
    cross_enabled: int


@njit(cache=True, nogil=True)
def _ca_loop(u, start, stop,
             emission_cum, emission_kind,
             oloss_off, oloss_cum, oloss_node,
             sift_off, sift_cum, sift_readout, sift_next, ctrl_next,
             ret_off, ret_cum, ret_next, ret_guess, ret_evebit,
             rloss_off, rloss_cum, rloss_node,
             bobz_off, bobz_cum, bobz_pat,
             bobx_off, bobx_cum, bobx_pat,
             test_fraction, cross_fraction, cross_enabled,
             out_emit, out_action, out_readout, out_basis, out_pattern,
             out_test, out_guess, out_evebit):
    n_emis = emission_cum.shape[0]
    for i in range(start, stop):
        e = 0
        while e < n_emis - 1 and u[i, 0] >= emission_cum[e]:
            e += 1
        t = oloss_off[e]
        hi = oloss_off[e + 1]
        while t < hi - 1 and u[i, 1] >= oloss_cum[t]:
            t += 1
        node = oloss_node[t]

        ctrl = u[i, 2] < 0.5
        if ctrl:
            readout = -1
            resid = ctrl_next[node]
        else:
            t = sift_off[node]
            hi = sift_off[node + 1]
            while t < hi - 1 and u[i, 3] >= sift_cum[t]:
                t += 1
            readout = sift_readout[t]
            resid = sift_next[t]

        t = ret_off[resid]
        hi = ret_off[resid + 1]
        while t < hi - 1 and u[i, 4] >= ret_cum[t]:
            t += 1
        returned = ret_next[t]
        guess = ret_guess[t]
        evebit = ret_evebit[t]

        t = rloss_off[returned]
        hi = rloss_off[returned + 1]
        while t < hi - 1 and u[i, 6] >= rloss_cum[t]:
            t += 1
        measured = rloss_node[t]

        kind = emission_kind[e]
        if kind == 0:
            basis = 1 if ctrl else 0
            if cross_enabled == 1 and u[i, 7] < cross_fraction:
                basis = 1 - basis
        else:
            basis = 0

        if basis == 1:
            t = bobx_off[measured]
            hi = bobx_off[measured + 1]
            while t < hi - 1 and u[i, 8] >= bobx_cum[t]:
                t += 1
            pattern = bobx_pat[t]
        else:
            t = bobz_off[measured]
            hi = bobz_off[measured + 1]
            while t < hi - 1 and u[i, 8] >= bobz_cum[t]:
                t += 1
            pattern = bobz_pat[t]

        test = 0
        if (not ctrl) and kind == 0 and basis == 0 and u[i, 9] < test_fraction:
            test = 1

        out_emit[i] = e
        out_action[i] = 0 if ctrl else 1
        out_readout[i] = readout
        out_basis[i] = basis
        out_pattern[i] = pattern
        out_test[i] = test
        out_guess[i] = guess
        out_evebit[i] = evebit


def _pick_flat(cum: np.ndarray, us: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, us, side="right")
    return np.minimum(idx, len(cum) - 1)


def _pick_staged(off: np.ndarray, cum: np.ndarray, parents: np.ndarray,
                 us: np.ndarray) -> np.ndarray:
    out = np.empty(parents.shape[0], dtype=np.int64)
    for p in np.unique(parents):
        m = parents == p
        lo, hi = int(off[p]), int(off[p + 1])
        idx = np.searchsorted(cum[lo:hi], us[m], side="right")
        out[m] = lo + np.minimum(idx, hi - lo - 1)
    return out


def _ca_numpy(tab: CaTables, u: np.ndarray, start: int, stop: int, out) -> None:
    s = slice(start, stop)
    n = stop - start
    e = _pick_flat(tab.emission_cum, u[s, 0])
    node = tab.oloss_node[_pick_staged(tab.oloss_off, tab.oloss_cum, e, u[s, 1])]

    ctrl = u[s, 2] < 0.5
    readout = np.full(n, -1, dtype=np.int8)
    resid = np.empty(n, dtype=np.int64)
    resid[ctrl] = tab.ctrl_next[node[ctrl]]
    sift = ~ctrl
    if sift.any():
        k = _pick_staged(tab.sift_off, tab.sift_cum, node[sift], u[s, 3][sift])
        readout[sift] = tab.sift_readout[k]
        resid[sift] = tab.sift_next[k]

    j = _pick_staged(tab.ret_off, tab.ret_cum, resid, u[s, 4])
    returned = tab.ret_next[j]
    guess = tab.ret_guess[j]
    evebit = tab.ret_evebit[j]

    measured = tab.rloss_node[
        _pick_staged(tab.rloss_off, tab.rloss_cum, returned, u[s, 6])]

    kind = tab.emission_kind[e]
    basis = np.where(ctrl, 1, 0).astype(np.int8)
    if tab.cross_enabled == 1:
        flip = (kind == 0) & (u[s, 7] < tab.cross_fraction)
        basis = np.where(flip, 1 - basis, basis).astype(np.int8)
    basis = np.where(kind != 0, 0, basis).astype(np.int8)

    pattern = np.empty(n, dtype=np.int8)
    xm = basis == 1
    if xm.any():
        k = _pick_staged(tab.bobx_off, tab.bobx_cum, measured[xm], u[s, 8][xm])
        pattern[xm] = tab.bobx_pat[k]
    zm = ~xm
    if zm.any():
        k = _pick_staged(tab.bobz_off, tab.bobz_cum, measured[zm], u[s, 8][zm])
        pattern[zm] = tab.bobz_pat[k]

    test = ((~ctrl) & (kind == 0) & (basis == 0)
            & (u[s, 9] < tab.test_fraction)).astype(np.int8)

    out["emit"][s] = e.astype(np.int16)
    out["action"][s] = np.where(ctrl, 0, 1).astype(np.int8)
    out["readout"][s] = readout
    out["basis"][s] = basis
    out["pattern"][s] = pattern
    out["test"][s] = test
    out["guess"][s] = guess
    out["evebit"][s] = evebit


def simulate_ca(tab: CaTables, u: np.ndarray, jobs: int = 1,
                backend: Optional[str] = None) -> Dict[str, np.ndarray]:
    n = u.shape[0]
    out = {
        "emit": np.zeros(n, dtype=np.int16),
        "action": np.zeros(n, dtype=np.int8),
        "readout": np.zeros(n, dtype=np.int8),
        "basis": np.zeros(n, dtype=np.int8),
        "pattern": np.zeros(n, dtype=np.int8),
        "test": np.zeros(n, dtype=np.int8),
        "guess": np.zeros(n, dtype=np.int8),
        "evebit": np.zeros(n, dtype=np.int8),
    }
    if active_backend(backend) == "numba":
        def worker(lo, hi):
            _ca_loop(u, lo, hi,
                     tab.emission_cum, tab.emission_kind,
                     tab.oloss_off, tab.oloss_cum, tab.oloss_node,
                     tab.sift_off, tab.sift_cum, tab.sift_readout,
                     tab.sift_next, tab.ctrl_next,
                     tab.ret_off, tab.ret_cum, tab.ret_next,
                     tab.ret_guess, tab.ret_evebit,
                     tab.rloss_off, tab.rloss_cum, tab.rloss_node,
                     tab.bobz_off, tab.bobz_cum, tab.bobz_pat,
                     tab.bobx_off, tab.bobx_cum, tab.bobx_pat,
                     tab.test_fraction, tab.cross_fraction, tab.cross_enabled,
                     out["emit"], out["action"], out["readout"], out["basis"],
                     out["pattern"], out["test"], out["guess"], out["evebit"])
    else:
        def worker(lo, hi):
            _ca_numpy(tab, u, lo, hi, out)
    _run_chunks(worker, n, jobs)
    return out


# ---------------------------------------------------------------------------
# one-way BB84 rounds


@dataclass
class Bb84Tables:
    pulse_size: np.ndarray       # (N,) photons per pulse, sampled upfront
    forward: np.ndarray          # (N,) 1 where the splitter forwards a photon
    attack: int                  # 1 when the splitting attack is active
    loss_off: np.ndarray         # (3+1,), row per pulse size
    loss_cum: np.ndarray
    loss_m: np.ndarray           # surviving photon count per branch
    meas_off: np.ndarray         # (4+1,), row r = (m-1)*2 + same_basis
    meas_cum: np.ndarray
    meas_pat: np.ndarray         # pattern codes, bit-0 convention


@njit(cache=True, nogil=True)
def _bb84_loop(u, start, stop, pulse_size, forward, attack,
               loss_off, loss_cum, loss_m,
               meas_off, meas_cum, meas_pat, mirror,
               out_bit, out_basis, out_bob_basis, out_pattern, out_evebit):
    for i in range(start, stop):
        bit = 0 if u[i, 0] < 0.5 else 1
        basis = 0 if u[i, 1] < 0.5 else 1
        size = pulse_size[i]
        evebit = -1
        if attack == 1:
            m = 0
            if forward[i] == 1:
                m = 1
                evebit = bit
        else:
            t = loss_off[size]
            hi = loss_off[size + 1]
            while t < hi - 1 and u[i, 3] >= loss_cum[t]:
                t += 1
            m = loss_m[t]
        bob_basis = 0 if u[i, 4] < 0.5 else 1
        if m == 0:
            pattern = 0
        else:
            same = 1 if bob_basis == basis else 0
            r = (m - 1) * 2 + same
            t = meas_off[r]
            hi = meas_off[r + 1]
            while t < hi - 1 and u[i, 5] >= meas_cum[t]:
                t += 1
            pattern = meas_pat[t]
            if bit == 1:
                pattern = mirror[pattern]
        out_bit[i] = bit
        out_basis[i] = basis
        out_bob_basis[i] = bob_basis
        out_pattern[i] = pattern
        out_evebit[i] = evebit


def _bb84_numpy(tab: Bb84Tables, u: np.ndarray, start: int, stop: int, out) -> None:
    s = slice(start, stop)
    n = stop - start
    bit = (u[s, 0] >= 0.5).astype(np.int8)
    basis = (u[s, 1] >= 0.5).astype(np.int8)
    size = tab.pulse_size[s]
    evebit = np.full(n, -1, dtype=np.int8)
    if tab.attack == 1:
        m = np.where(tab.forward[s] == 1, 1, 0).astype(np.int8)
        evebit = np.where(tab.forward[s] == 1, bit, evebit).astype(np.int8)
    else:
        k = _pick_staged(tab.loss_off, tab.loss_cum, size.astype(np.int64),
                         u[s, 3])
        m = tab.loss_m[k]
    bob_basis = (u[s, 4] >= 0.5).astype(np.int8)
    pattern = np.zeros(n, dtype=np.int8)
    hit = m >= 1
    if hit.any():
        same = (bob_basis[hit] == basis[hit]).astype(np.int64)
        r = (m[hit].astype(np.int64) - 1) * 2 + same
        k = _pick_staged(tab.meas_off, tab.meas_cum, r, u[s, 5][hit])
        pat = tab.meas_pat[k]
        pat = np.where(bit[hit] == 1, MIRROR_CODE[pat], pat).astype(np.int8)
        pattern[hit] = pat
    out["bit"][s] = bit
    out["basis"][s] = basis
    out["bob_basis"][s] = bob_basis
    out["pattern"][s] = pattern
    out["evebit"][s] = evebit


def simulate_bb84(tab: Bb84Tables, u: np.ndarray, jobs: int = 1,
                  backend: Optional[str] = None) -> Dict[str, np.ndarray]:
    n = u.shape[0]
    out = {
        "bit": np.zeros(n, dtype=np.int8),
        "basis": np.zeros(n, dtype=np.int8),
        "bob_basis": np.zeros(n, dtype=np.int8),
        "pattern": np.zeros(n, dtype=np.int8),
        "evebit": np.zeros(n, dtype=np.int8),
    }
    if active_backend(backend) == "numba":
        def worker(lo, hi):
            _bb84_loop(u, lo, hi, tab.pulse_size, tab.forward, tab.attack,
                       tab.loss_off, tab.loss_cum, tab.loss_m,
                       tab.meas_off, tab.meas_cum, tab.meas_pat, MIRROR_CODE,
                       out["bit"], out["basis"], out["bob_basis"],
                       out["pattern"], out["evebit"])
    else:
        def worker(lo, hi):
            _bb84_numpy(tab, u, lo, hi, out)
    _run_chunks(worker, n, jobs)
    return out


# ---------------------------------------------------------------------------
# two-state (B92-style) rounds


@dataclass
class B92Tables:
    conclusive_p: float          # 1 - overlap^2
    transmission: float
    attack: int                  # 1 when the conclusive intercept is active


@njit(cache=True, nogil=True)
def _b92_loop(u, start, stop, conclusive_p, transmission, attack,
              out_bit, out_arrived, out_bob_basis, out_conclusive,
              out_bob_bit, out_evebit):
    for i in range(start, stop):
        bit = 0 if u[i, 0] < 0.5 else 1
        evebit = -1
        if attack == 1:
            ebasis = 0 if u[i, 1] < 0.5 else 1
            if ebasis != bit and u[i, 2] < conclusive_p:
                arrived = 1
                evebit = bit
            else:
                arrived = 0
        else:
            arrived = 1 if u[i, 3] < transmission else 0
        bob_basis = -1
        conclusive = 0
        bob_bit = -1
        if arrived == 1:
            bob_basis = 0 if u[i, 4] < 0.5 else 1
            if bob_basis != bit and u[i, 5] < conclusive_p:
                conclusive = 1
                bob_bit = 1 - bob_basis
        out_bit[i] = bit
        out_arrived[i] = arrived
        out_bob_basis[i] = bob_basis
        out_conclusive[i] = conclusive
        out_bob_bit[i] = bob_bit
        out_evebit[i] = evebit


def _b92_numpy(tab: B92Tables, u: np.ndarray, start: int, stop: int, out) -> None:
    s = slice(start, stop)
    n = stop - start
    bit = (u[s, 0] >= 0.5).astype(np.int8)
    evebit = np.full(n, -1, dtype=np.int8)
    if tab.attack == 1:
        ebasis = (u[s, 1] >= 0.5).astype(np.int8)
        arrived = ((ebasis != bit) & (u[s, 2] < tab.conclusive_p)).astype(np.int8)
        evebit = np.where(arrived == 1, bit, evebit).astype(np.int8)
    else:
        arrived = (u[s, 3] < tab.transmission).astype(np.int8)
    bob_basis = np.full(n, -1, dtype=np.int8)
    conclusive = np.zeros(n, dtype=np.int8)
    bob_bit = np.full(n, -1, dtype=np.int8)
    hit = arrived == 1
    if hit.any():
        bb = (u[s, 4][hit] >= 0.5).astype(np.int8)
        bob_basis[hit] = bb
        con = (bb != bit[hit]) & (u[s, 5][hit] < tab.conclusive_p)
        conclusive[hit] = con.astype(np.int8)
        bob_bit[hit] = np.where(con, 1 - bb, -1).astype(np.int8)
    out["bit"][s] = bit
    out["arrived"][s] = arrived
    out["bob_basis"][s] = bob_basis
    out["conclusive"][s] = conclusive
    out["bob_bit"][s] = bob_bit
    out["evebit"][s] = evebit


def simulate_b92(tab: B92Tables, u: np.ndarray, jobs: int = 1,
                 backend: Optional[str] = None) -> Dict[str, np.ndarray]:
    n = u.shape[0]
    out = {
        "bit": np.zeros(n, dtype=np.int8),
        "arrived": np.zeros(n, dtype=np.int8),
        "bob_basis": np.zeros(n, dtype=np.int8),
        "conclusive": np.zeros(n, dtype=np.int8),
        "bob_bit": np.zeros(n, dtype=np.int8),
        "evebit": np.zeros(n, dtype=np.int8),
    }
    if active_backend(backend) == "numba":
        def worker(lo, hi):
            _b92_loop(u, lo, hi, tab.conclusive_p, tab.transmission, tab.attack,
                      out["bit"], out["arrived"], out["bob_basis"],
                      out["conclusive"], out["bob_bit"], out["evebit"])
    else:
        def worker(lo, hi):
            _b92_numpy(tab, u, lo, hi, out)
    _run_chunks(worker, n, jobs)
    return out
