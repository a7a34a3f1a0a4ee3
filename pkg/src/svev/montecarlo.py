"""Stochastic verification harness: matrix samplers, spectral extraction,
estimators of the joint eigenradius/singular-value laws, and the
deterministic per-draw audits (product identity, Weyl majorization).

Sampling is reproducible: a Philox counter-based generator seeded from a
recorded master seed, with worker sub-streams spawned from it.  Histogram
merging is associative, so chunked/threaded accumulation is order-free.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DomainError

COND_LIMIT = 1e12  # draws beyond this are discarded (and counted)
WEYL_SLACK = 1e-10  # relative slack on the deterministic inequalities
PROD_TOL = 1e-6  # product-identity relative tolerance per accepted draw


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; the seed is what run outputs record."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, workers: int) -> list[np.random.Generator]:
    """Independent per-worker sub-streams derived from one master seed."""
    return [np.random.Generator(np.random.Philox(key=s.generate_state(2, np.uint64)))
            for s in np.random.SeedSequence(seed).spawn(workers)]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _std_complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def haar_unitary(dim: int, rng, size: Optional[int] = None):
    """Haar-distributed unitaries via QR of a complex Ginibre matrix with the
    R-diagonal phases divided out (plain QR alone is not Haar)."""
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    shape = (dim, dim) if size is None else (size, dim, dim)
    z = _std_complex_normal(rng, shape)
    q, r = np.linalg.qr(z)
    d = np.einsum("...ii->...i", r)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def sample_ginibre(n: int, rng, size: Optional[int] = None):
    """i.i.d. standard complex Gaussian entries (unit variance per entry);
    the squared singular values follow the Laguerre ensemble with α = 0."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    shape = (n, n) if size is None else (size, n, n)
    return _std_complex_normal(rng, shape)


def sample_truncated_unitary(n: int, m: int, rng, size: Optional[int] = None):
    """Top-left n×n block of an m-dim Haar unitary.

    The squared singular values follow the Jacobi ensemble with α = 0 and
    β = m − 2n (so m = 2n + β; m ≥ 2n keeps the law absolutely continuous).
    """
    if m <= n:
        raise DomainError(f"truncation needs m > n, got n={n}, m={m}")
    u = haar_unitary(m, rng, size)
    return u[..., :n, :n]


def truncation_beta(n: int, m: int) -> int:
    """Jacobi β parameter realized by truncating U(m) to n×n."""
    return m - 2 * n


def compose_fixed_sv(a: Sequence[float], rng, size: Optional[int] = None):
    """X = U diag(√a) V with independent Haar U, V: a bi-unitarily invariant
    matrix with prescribed squared singular values a."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("squared singular values must be positive")
    n = len(a)
    u = haar_unitary(n, rng, size)
    v = haar_unitary(n, rng, size)
    root = np.sqrt(a)
    return (u * root[..., None, :]) @ v


def sample_laguerre_sv2(n: int, alpha: float, rng, size: int):
    """Squared singular values of the Laguerre ensemble with general α > −1,
    via the bidiagonal (Householder-reduced) model; no matrix for the
    eigenvalues exists on this route — use compose_fixed_sv afterwards.
    """
    if alpha <= -1:
        raise DomainError(f"alpha must be > -1, got {alpha}")
    out = np.empty((size, n))
    diag_shapes = alpha + np.arange(n, 0, -1)  # α+n, ..., α+1
    sub_shapes = np.arange(n - 1, 0, -1)  # n-1, ..., 1
    dg = np.sqrt(rng.gamma(diag_shapes, 1.0, size=(size, n)))
    sb = np.sqrt(rng.gamma(sub_shapes, 1.0, size=(size, n - 1))) if n > 1 else None
    for i in range(size):
        b = np.diag(dg[i])
        if n > 1:
            b += np.diag(sb[i], k=-1)
        out[i] = np.linalg.eigvalsh(b @ b.T)
    return out


def minor_ratio_samples(a: Sequence[float], rng, size: int):
    """Ladder d_p/d_{p-1} of leading principal minors of U diag(a) U† (the
    squared Cholesky diagonal), one Haar U per draw -> shape (size, n).

    Averaged over the ladder index, these ratios reproduce the conditional
    law of one squared eigenradius given the squared singular values a.
    """
    a = np.asarray(a, dtype=float)
    n = len(a)
    u = haar_unitary(n, rng, size)
    m = (u * a[None, None, :]) @ np.conjugate(np.swapaxes(u, -1, -2))
    m = 0.5 * (m + np.conjugate(np.swapaxes(m, -1, -2)))
    chol = np.linalg.cholesky(m)
    d = np.abs(np.einsum("...ii->...i", chol))
    return d * d


# ---------------------------------------------------------------------------
# spectra and audits
# ---------------------------------------------------------------------------


@dataclass
class SpectralSample:
    """One draw's squared singular values and squared eigenradii with audits."""

    sv2: np.ndarray
    ev2: np.ndarray
    prod_gap: float
    weyl_ok: dict
    cond: float

    @property
    def ok(self) -> bool:
        return all(self.weyl_ok.values()) and self.prod_gap <= PROD_TOL


@dataclass
class AuditSummary:
    draws: int = 0
    discards: int = 0
    weyl_product_violations: int = 0
    weyl_sum_violations: int = 0
    bound_violations: int = 0
    max_prod_gap: float = 0.0

    @property
    def discard_rate(self) -> float:
        return self.discards / max(self.draws, 1)

    @property
    def total_violations(self) -> int:
        return self.weyl_product_violations + self.weyl_sum_violations + self.bound_violations

    def merge(self, other: "AuditSummary"):
        self.draws += other.draws
        self.discards += other.discards
        self.weyl_product_violations += other.weyl_product_violations
        self.weyl_sum_violations += other.weyl_sum_violations
        self.bound_violations += other.bound_violations
        self.max_prod_gap = max(self.max_prod_gap, other.max_prod_gap)


def audit_arrays(sv2: np.ndarray, ev2: np.ndarray):
    """Vectorized deterministic audits on (N, n) arrays of accepted draws.

    Returns (prod_gap (N,), weyl_prod_ok, weyl_sum_ok, bounds_ok) with the
    inequalities checked under the relative WEYL_SLACK.
    """
    sv_d = np.sort(sv2, axis=1)[:, ::-1]
    ev_d = np.sort(ev2, axis=1)[:, ::-1]
    log_slack = math.log1p(WEYL_SLACK)
    cum_sv = np.cumsum(np.log(sv_d), axis=1)
    cum_ev = np.cumsum(np.log(ev_d), axis=1)
    prod_gap = np.abs(np.expm1(cum_ev[:, -1] - cum_sv[:, -1]))
    n = sv2.shape[1]
    if n > 1:
        weyl_prod_ok = np.all(cum_ev[:, :-1] <= cum_sv[:, :-1] + log_slack, axis=1)
    else:
        weyl_prod_ok = np.ones(len(sv2), dtype=bool)
    ssv = np.cumsum(np.sqrt(sv_d), axis=1)
    sev = np.cumsum(np.sqrt(ev_d), axis=1)
    weyl_sum_ok = np.all(sev <= ssv * (1.0 + WEYL_SLACK), axis=1)
    bounds_ok = (ev_d[:, 0] <= sv_d[:, 0] * (1.0 + WEYL_SLACK)) & (
        sv_d[:, -1] <= ev_d[:, -1] * (1.0 + WEYL_SLACK)
    )
    return prod_gap, weyl_prod_ok, weyl_sum_ok, bounds_ok


def spectra_batch(x: np.ndarray):
    """SVD + eigenvalue spectra of a batch (N, n, n); near-singular draws
    (condition number beyond COND_LIMIT) are masked out, not returned.

    Returns (sv2, ev2, summary) for the accepted draws.
    """
    s = np.linalg.svd(x, compute_uv=False)
    lam = np.linalg.eigvals(x)
    cond = s[..., 0] / s[..., -1]
    keep = np.isfinite(cond) & (cond < COND_LIMIT)
    sv2 = s[keep] ** 2
    ev2 = np.abs(lam[keep]) ** 2
    summary = AuditSummary(draws=len(x), discards=int(len(x) - keep.sum()))
    prod_gap, wp, ws, bd = audit_arrays(sv2, ev2)
    summary.weyl_product_violations = int((~wp).sum())
    summary.weyl_sum_violations = int((~ws).sum())
    summary.bound_violations = int((~bd).sum())
    summary.max_prod_gap = float(prod_gap.max(initial=0.0))
    return sv2, ev2, summary


def spectra(x: np.ndarray) -> SpectralSample:
    """Spectra and audits of a single matrix; raises on a discarded draw."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DomainError("spectra expects one square matrix")
    if not np.all(np.isfinite(x)):
        raise DomainError("matrix entries must be finite")
    s = np.linalg.svd(x, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    if not (cond < COND_LIMIT):
        raise DomainError(f"draw discarded: condition number {cond:.2e} >= {COND_LIMIT:.0e}")
    lam = np.linalg.eigvals(x)
    sv2 = s**2
    ev2 = np.abs(lam) ** 2
    prod_gap, wp, ws, bd = audit_arrays(sv2[None, :], ev2[None, :])
    return SpectralSample(
        sv2=sv2,
        ev2=ev2,
        prod_gap=float(prod_gap[0]),
        weyl_ok={"products": bool(wp[0]), "sums": bool(ws[0]), "bounds": bool(bd[0])},
        cond=cond,
    )


# ---------------------------------------------------------------------------
# histogram estimators
# ---------------------------------------------------------------------------


class Histogram1D:
    """Weighted histogram where each draw deposits total weight 1 (spread as
    1/n over its n values), so total weight / draws = 1 identically."""

    def __init__(self, edges: np.ndarray):
        self.edges = np.asarray(edges, dtype=float)
        if self.edges.ndim != 1 or len(self.edges) < 2 or np.any(np.diff(self.edges) <= 0):
            raise DomainError("edges must be strictly increasing")
        self.weight = np.zeros(len(self.edges) - 1)
        self.samples = 0

    def add(self, values: np.ndarray):
        values = np.atleast_2d(values)
        n = values.shape[1]
        w, _ = np.histogram(values.ravel(), bins=self.edges)
        self.weight += w / n
        self.samples += len(values)

    def merge(self, other: "Histogram1D"):
        if not np.array_equal(self.edges, other.edges):
            raise DomainError("cannot merge histograms with different edges")
        self.weight += other.weight
        self.samples += other.samples

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def density(self):
        return self.weight / (self.samples * self.widths)

    def stderr(self):
        p = self.weight / self.samples
        return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / self.samples) / self.widths

    def total_mass(self) -> float:
        return float(self.weight.sum() / self.samples)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("x_lo,x_hi,density,stderr\n")
            d, e = self.density(), self.stderr()
            for i in range(len(self.weight)):
                fh.write(
                    f"{self.edges[i]:.17g},{self.edges[i + 1]:.17g},{d[i]:.17g},{e[i]:.17g}\n"
                )


class JointHistogram:
    """2D estimator of the joint (eigenradius, singular value) density: every
    draw deposits weight 1/n² on each ordered pair (r_l, a_m)."""

    def __init__(self, r_edges: np.ndarray, a_edges: np.ndarray):
        self.r_edges = np.asarray(r_edges, dtype=float)
        self.a_edges = np.asarray(a_edges, dtype=float)
        for e in (self.r_edges, self.a_edges):
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise DomainError("edges must be strictly increasing")
        self.weight = np.zeros((len(self.r_edges) - 1, len(self.a_edges) - 1))
        self.samples = 0

    def add(self, ev2: np.ndarray, sv2: np.ndarray):
        ev2 = np.atleast_2d(ev2)
        sv2 = np.atleast_2d(sv2)
        nn, n = ev2.shape
        rr = np.repeat(ev2, n, axis=1).ravel()
        aa = np.tile(sv2, (1, n)).ravel()
        w, _, _ = np.histogram2d(rr, aa, bins=(self.r_edges, self.a_edges))
        self.weight += w / (n * n)
        self.samples += nn

    def merge(self, other: "JointHistogram"):
        if not (
            np.array_equal(self.r_edges, other.r_edges)
            and np.array_equal(self.a_edges, other.a_edges)
        ):
            raise DomainError("cannot merge histograms with different edges")
        self.weight += other.weight
        self.samples += other.samples

    @property
    def bin_areas(self):
        return np.outer(np.diff(self.r_edges), np.diff(self.a_edges))

    def density(self):
        return self.weight / (self.samples * self.bin_areas)

    def stderr(self):
        p = self.weight / self.samples
        return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / self.samples) / self.bin_areas

    def total_mass(self) -> float:
        return float(self.weight.sum() / self.samples)

    def marginal_r(self) -> Histogram1D:
        h = Histogram1D(self.r_edges)
        h.weight = self.weight.sum(axis=1)
        h.samples = self.samples
        return h

    def marginal_a(self) -> Histogram1D:
        h = Histogram1D(self.a_edges)
        h.weight = self.weight.sum(axis=0)
        h.samples = self.samples
        return h

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("r_lo,r_hi,a_lo,a_hi,density,stderr\n")
            d, e = self.density(), self.stderr()
            for i in range(self.weight.shape[0]):
                for j in range(self.weight.shape[1]):
                    fh.write(
                        f"{self.r_edges[i]:.17g},{self.r_edges[i + 1]:.17g},"
                        f"{self.a_edges[j]:.17g},{self.a_edges[j + 1]:.17g},"
                        f"{d[i, j]:.17g},{e[i, j]:.17g}\n"
                    )


def estimate_jk(samples, j: int, k: int, r_edges=None, a_edges=None):
    """Histogram estimator of the (j,k)-point density from SpectralSamples.

    Supported: (j,k) in {(1,0), (0,1), (1,1)} — the estimators with analytic
    counterparts in scope.  ``samples`` is an iterable of SpectralSample or a
    pair of arrays (ev2, sv2) of shape (N, n).
    """
    if j not in (0, 1) or k < 0:
        raise DomainError("need j in {0,1} and k >= 0")
    if j + k < 1:
        raise DomainError("need j + k >= 1")
    if (j, k) not in ((1, 0), (0, 1), (1, 1)):
        raise DomainError(f"(j,k)=({j},{k}) estimator not implemented (no analytic counterpart)")
    if isinstance(samples, tuple):
        ev2, sv2 = samples
    else:
        samples = list(samples)
        if not samples:
            raise DomainError("empty sample stream")
        ev2 = np.array([s.ev2 for s in samples])
        sv2 = np.array([s.sv2 for s in samples])
    if len(ev2) == 0:
        raise DomainError("empty sample stream")
    if (j, k) == (1, 1):
        h = JointHistogram(r_edges, a_edges)
        h.add(ev2, sv2)
        return h
    edges = r_edges if j == 1 else a_edges
    h = Histogram1D(edges)
    h.add(ev2 if j == 1 else sv2)
    return h


# ---------------------------------------------------------------------------
# chunked run driver
# ---------------------------------------------------------------------------


@dataclass
class MCRun:
    """Accumulated result of a chunked sampling run."""

    joint: JointHistogram
    hist_r: Histogram1D
    hist_a: Histogram1D
    audits: AuditSummary
    seed: int
    draws: int
    sum_sv2: float = 0.0


def _sample_chunk(kind, n, m, a, rng, size):
    if kind == "ginibre":
        return sample_ginibre(n, rng, size)
    if kind == "truncated":
        return sample_truncated_unitary(n, m, rng, size)
    if kind == "fixed-sv":
        return compose_fixed_sv(a, rng, size)
    if kind == "laguerre-sv":
        sv2 = sample_laguerre_sv2(n, a, rng, size)  # a carries alpha here
        mats = np.empty((size, n, n), dtype=complex)
        for i in range(size):
            mats[i] = compose_fixed_sv(sv2[i], rng)
        return mats
    raise DomainError(f"unknown sampler kind {kind!r}")


def run_sampler(
    kind: str,
    n: int,
    draws: int,
    seed: int,
    r_edges: np.ndarray,
    a_edges: np.ndarray,
    m: Optional[int] = None,
    a: Optional[Sequence[float]] = None,
    chunk: int = 20000,
    threads: int = 1,
) -> MCRun:
    """Draw ``draws`` matrices of the requested ensemble in chunks, extract
    spectra, audit every accepted draw, and accumulate the estimators."""
    if draws < 1:
        raise DomainError("draws must be >= 1")
    sizes = [chunk] * (draws // chunk)
    if draws % chunk:
        sizes.append(draws % chunk)
    rngs = spawn_rngs(seed, len(sizes))
    joint = JointHistogram(r_edges, a_edges)
    hist_r = Histogram1D(r_edges)
    hist_a = Histogram1D(a_edges)
    audits = AuditSummary()
    sum_sv2 = 0.0

    def work(args):
        rng, size = args
        x = _sample_chunk(kind, n, m, a, rng, size)
        return spectra_batch(x)

    def consume(res):
        nonlocal sum_sv2
        sv2, ev2, summary = res
        joint.add(ev2, sv2)
        hist_r.add(ev2)
        hist_a.add(sv2)
        audits.merge(summary)
        sum_sv2 += float(sv2.sum())

    jobs = list(zip(rngs, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(work, jobs):
                consume(res)
    else:
        for job in jobs:
            consume(work(job))
    return MCRun(
        joint=joint,
        hist_r=hist_r,
        hist_a=hist_a,
        audits=audits,
        seed=seed,
        draws=draws,
        sum_sv2=sum_sv2,
    )


def write_metadata(path, entries: dict):
    """Plain-text key=value sidecar, one entry per line."""
    with open(path, "w", newline="\n") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={v}\n")


def read_metadata(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out
