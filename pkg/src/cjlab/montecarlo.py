"""Pulse-by-pulse simulation of the heralded interference experiment.

Each record pulse is one heralded event: source pair numbers are drawn
conditioned on the trigger clicking, the crystal output is drawn from the
exact conditional law ``P_{n|jk}``, and every H-mode photon is routed to one
detector of the analysis array or lost.

Click records are stored as a framed binary stream::

    offset  size  field
    0       4     magic b"CJMC"
    4       2     format version (u16, little endian), currently 1
    6       1     number of detectors K (u8)
    7       1     reserved, zero
    8       8     number of pulses (u64, little endian)
    16      ...   click bits, K per pulse, packed little-endian bit order:
                  pulse t, detector k is bit (t*K + k) of the stream
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import os
import struct

import numpy as np

from ._validation import check_occupation
from .detectors import CoincidenceStats
from .distributions import _p_spdc, dist_given_input
from .fock import cutoff_for_gain

__all__ = [
    "ClickRecord",
    "sample_pulses",
    "estimate_cm",
    "apply_dead_time",
    "write_record",
    "read_record",
    "max_workers",
]

MAGIC = b"CJMC"
VERSION = 1
_HEADER = struct.Struct("<4sHBBQ")
DEFAULT_CHUNK = 1 << 20


def max_workers():
    """Worker cap from ``CJLAB_THREADS`` (default: number of CPUs)."""
    env = os.environ.get("CJLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"CJLAB_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class ClickRecord:
    """Packed per-pulse click masks of a ``K``-detector array.

    ``bits`` holds ``pulses * K`` bits in little-endian bit order.
    """

    pulses: int
    n_detectors: int
    bits: np.ndarray
    seed: int = None
    chunk_size: int = DEFAULT_CHUNK

    @classmethod
    def from_clicks(cls, clicks, seed=None, chunk_size=DEFAULT_CHUNK):
        clicks = np.asarray(clicks, dtype=bool)
        if clicks.ndim != 2:
            raise ValueError("clicks must be (pulses, K)")
        bits = np.packbits(clicks.reshape(-1), bitorder="little")
        return cls(clicks.shape[0], clicks.shape[1], bits, seed, chunk_size)

    def clicks(self):
        """Unpacked ``(pulses, K)`` boolean click matrix."""
        n = self.pulses * self.n_detectors
        flat = np.unpackbits(self.bits, count=n, bitorder="little").astype(bool)
        return flat.reshape(self.pulses, self.n_detectors)

    def singles(self):
        """Clicks per detector."""
        return self.clicks().sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, ClickRecord):
            return NotImplemented
        return (self.pulses == other.pulses and self.n_detectors == other.n_detectors
                and np.array_equal(self.bits, other.bits))


def _chunk_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def _source_table(gain, trig_eff):
    """Pair-number law of a source given its trigger clicked."""
    p_trig = 1.0 - 1.0 / (1.0 + (gain - 1.0) * trig_eff)
    ratio = (gain - 1.0) / gain
    m_max = max(1, math.ceil(math.log(1e-16 * p_trig) / math.log(ratio)))
    m = np.arange(m_max + 1)
    w = _p_spdc(gain, m) * (1.0 - (1.0 - trig_eff) ** m)
    return w / w.sum()


def _draw_source(rng, n, gain, overlap, trig_eff, transmission):
    if gain == 1.0:
        photons = (rng.random(n) < overlap).astype(np.int64)
    else:
        table = _source_table(gain, trig_eff)
        pairs = rng.choice(table.size, size=n, p=table)
        photons = rng.binomial(pairs, overlap)
    if transmission != 1.0:
        photons = rng.binomial(photons, transmission)
    return photons


def _draw_output(rng, g, j, k):
    n = np.zeros(j.size, dtype=np.int64)
    keys = j * (int(k.max()) + 1) + k
    for key in np.unique(keys):
        sel = np.flatnonzero(keys == key)
        jj, kk = int(j[sel[0]]), int(k[sel[0]])
        cutoff = cutoff_for_gain(g) + jj + kk
        p = dist_given_input(jj, kk, g, cutoff).probs
        n[sel] = rng.choice(p.size, size=sel.size, p=p / p.sum())
    return n


def _simulate_chunk(model, effs, size, seed, index):
    rng = _chunk_rng(seed, index)
    j = _draw_source(rng, size, model.g1, model.o1, model.eta_t1, model.transmission)
    k = _draw_source(rng, size, model.g2, model.o2, model.eta_t2, model.transmission)
    n = _draw_output(rng, model.g, j, k)
    loss = max(0.0, 1.0 - math.fsum(effs))
    routed = rng.multinomial(n, list(effs) + [loss])
    return routed[:, :-1] > 0


def apply_dead_time(clicks, dead_pulses):
    """Blind each detector for ``dead_pulses`` pulses after every registered click."""
    dead_pulses = check_occupation(dead_pulses, "dead_pulses")
    clicks = np.array(clicks, dtype=bool)
    if dead_pulses == 0:
        return clicks
    for col in range(clicks.shape[1]):
        idx = np.flatnonzero(clicks[:, col])
        if idx.size < 2 or np.all(np.diff(idx) > dead_pulses):
            continue
        keep = np.zeros(idx.size, dtype=bool)
        free_at = -1
        for i, t in enumerate(idx.tolist()):
            if t >= free_at:
                keep[i] = True
                free_at = t + dead_pulses + 1
        clicks[idx[~keep], col] = False
    return clicks


def sample_pulses(model, dets, n_pulses, seed, chunk_size=DEFAULT_CHUNK, workers=None):
    """Simulate ``n_pulses`` heralded events and record the analysis array's clicks.

    Parameters
    ----------
    model : ExperimentModel
        Crystal gain, overlaps, sources and neutral filter. Source gains of
        one give ideal heralded single photons.
    dets : DetectorArray
        Per-detector routing probabilities and dead time.
    n_pulses : int
    seed : int
        Each chunk of ``chunk_size`` pulses draws from its own Philox stream
        keyed by ``(seed, chunk index)``, so the record depends on the seed and
        chunking only, never on ``workers``.
    workers : int, optional
        Threads used; capped by ``CJLAB_THREADS``.

    Returns
    -------
    ClickRecord
    """
    if int(n_pulses) != n_pulses or n_pulses < 1:
        raise ValueError("n_pulses must be a positive integer")
    if seed is None:
        raise ValueError("a seed is required")
    n_pulses, chunk_size, seed = int(n_pulses), int(chunk_size), int(seed)
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    sizes = [min(chunk_size, n_pulses - s) for s in range(0, n_pulses, chunk_size)]
    cap = max_workers()
    workers = cap if workers is None else max(1, min(int(workers), cap))
    effs = dets.efficiencies
    args = [(model, effs, size, seed, i) for i, size in enumerate(sizes)]
    if workers == 1 or len(args) == 1:
        parts = [_simulate_chunk(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _simulate_chunk(*a), args))
    clicks = np.concatenate(parts, axis=0)
    clicks = apply_dead_time(clicks, dets.dead_pulses)
    return ClickRecord.from_clicks(clicks, seed, chunk_size)


def estimate_cm(record, M=None):
    """Coincidence probabilities averaged over all ``m``-subsets of detectors.

    With ``c`` clicks in a pulse, a fixed ``m``-subset fires in ``C(c, m)`` of
    the ``C(K, m)`` subsets, so ``C_m`` is the pulse average of
    ``C(c, m) / C(K, m)``. ``cov`` is the covariance of these averages and
    ``sigma`` the standard errors, floored at ``1 / pulses`` so that orders
    with no events keep a finite uncertainty.
    """
    K = record.n_detectors
    M = K if M is None else int(M)
    if not 1 <= M <= K:
        raise ValueError(f"M must lie in 1..{K}")
    if record.pulses < 1:
        raise ValueError("empty record")
    c = record.clicks().sum(axis=1)
    hist = np.bincount(c, minlength=K + 1).astype(float)
    N = record.pulses
    # per-pulse contribution x[m-1, c] of a pulse with c clicks to C_m
    x = np.array([[math.comb(i, m) for i in range(K + 1)] for m in range(1, M + 1)],
                 dtype=float) / np.array([math.comb(K, m) for m in range(1, M + 1)])[:, None]
    probs = np.array([math.fsum(v) for v in hist * x]) / N
    second = (x * hist) @ x.T / N
    cov = (second - np.outer(probs, probs)) / N
    sigma = np.maximum(np.sqrt(np.clip(np.diag(cov), 0.0, None)), 1.0 / N)
    return CoincidenceStats(probs, probs * N, sigma, N,
                            {"n_detectors": K, "seed": record.seed}, cov)


def write_record(record, path):
    header = _HEADER.pack(MAGIC, VERSION, record.n_detectors, 0, record.pulses)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(record.bits, dtype=np.uint8).tobytes())


def read_record(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, K, _, pulses = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a click record (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    nbytes = (pulses * K + 7) // 8
    bits = np.frombuffer(raw, dtype=np.uint8, count=nbytes, offset=_HEADER.size).copy()
    if bits.size != nbytes:
        raise ValueError(f"{path}: truncated payload")
    return ClickRecord(pulses, K, bits)
