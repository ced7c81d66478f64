"""Exact finite-size solutions of the precoding quadratic program.

For a channel ``H`` (``k x n``, i.i.d. CN(0, 1/n) entries) the precoder sees
``J = (HH^H)^{-1}`` and must find

    min  x^H J x   over  x in B_{s_1} x ... x B_{s_k}.

Two exact solvers are provided: exhaustive enumeration and a Schnorr-Euchner
style sphere decoder. Both use the same tie rule (the lexicographically
smallest candidate index vector among energies within ``TIE_RTOL``), so they
return the same minimizer, not just the same energy.

Random streams are Philox generators keyed by ``(seed, sample index)``, which
makes a run independent of the number of worker threads.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .alphabet import TIE_RTOL, Alphabet, DataPrior, Kind, enumerate_points
from .errors import (BudgetExceeded, DomainError, NumericalFailure, SingularChannel,
                     UnsupportedKind, VecoderError)
from .replica import FixedPointConfig, ReplicaSolution, solve

BUDGET = 2 ** 24  # largest candidate count for exhaustive enumeration
AUTO_BRUTE_MAX = 2 ** 12  # Auto picks brute force up to this many candidates
COND_MAX = 1e12
MAX_RESAMPLES = 100
FAIL_FRACTION = 0.10
_CHUNK = 2 ** 16


class Solver(str, Enum):
    BRUTE = "brute"
    SPHERE = "sphere"
    AUTO = "auto"


@dataclass(frozen=True)
class ChannelConfig:
    k: int
    n: int
    samples: int
    seed: int = 0
    solver: Solver = Solver.AUTO

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver(self.solver))
        if self.k < 1 or self.n < self.k:
            raise DomainError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.samples < 1:
            raise DomainError("samples must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def alpha(self) -> float:
        return self.k / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.value
        return d


@dataclass
class SimResult:
    mean_es: float
    stderr: float
    energies: list[float]
    replica_es: float | None
    seed: int
    config: dict
    resamples: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)
    nodes: int = 0  # sphere-decoder nodes visited, summed over samples

    @property
    def ratio(self) -> float | None:
        if self.replica_es is None or not math.isfinite(self.replica_es):
            return None
        return self.mean_es / self.replica_es

    def to_dict(self) -> dict:
        return {
            "mean_es": self.mean_es,
            "stderr": self.stderr,
            "replica_es": self.replica_es,
            "ratio": self.ratio,
            "seed": self.seed,
            "config": self.config,
            "resamples": self.resamples,
            "failures": [list(f) for f in self.failures],
            "nodes": self.nodes,
            "energies": [None if math.isnan(e) else e for e in self.energies],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def write_energies_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "energy"])
            for i, e in enumerate(self.energies):
                w.writerow([i, repr(float(e))])


# ---------------------------------------------------------------------------
# channels


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of the run keyed by ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_channel(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``k x n`` matrix of i.i.d. circular complex Gaussians with variance ``1/n``."""
    if k < 1 or n < 1:
        raise DomainError("channel dimensions must be positive")
    scale = math.sqrt(0.5 / n)
    return scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))


def gramian_inverse(H: np.ndarray) -> np.ndarray:
    """``J = (HH^H)^{-1}``, symmetrized; SingularChannel if ill-conditioned."""
    G = H @ H.conj().T
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularChannel(f"condition number {cond:.3g} exceeds {COND_MAX:.0e}")
    J = np.linalg.inv(G)
    return (J + J.conj().T) / 2


# ---------------------------------------------------------------------------
# exact search


def _quad_forms(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``x^H M x`` for every row ``x`` of ``X``."""
    return np.einsum("bi,ij,bj->b", X.conj(), M, X).real


def _tie_tol(e: float) -> float:
    return TIE_RTOL * max(1.0, abs(e))


def _candidates(a: Alphabet, s: Sequence) -> list[np.ndarray]:
    if a.kind is Kind.SEMI_DISCRETE:
        raise UnsupportedKind("use precode_semidiscrete for semi-discrete alphabets")
    cache: dict[int, np.ndarray] = {}
    out = []
    for sym in s:
        i = a.symbol_index(sym)
        if i not in cache:
            cache[i] = enumerate_points(a, i)
        out.append(cache[i])
    return out


def _count(cands: list[np.ndarray]) -> int:
    return math.prod(len(c) for c in cands)


def _check_budget(count: int, budget: int) -> None:
    if count > budget:
        raise BudgetExceeded(
            f"{count} candidates exceed the enumeration budget {budget}; "
            "reduce k or L, or use the sphere decoder")


def _brute(M: np.ndarray, cands: list[np.ndarray], budget: int) -> tuple[np.ndarray, float]:
    sizes = [len(c) for c in cands]
    total = _count(cands)
    _check_budget(total, budget)
    # per chunk: its minimum and the near-minimal entries in index order
    shortlists = []
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.unravel_index(flat, sizes)
        X = np.stack([c[i] for c, i in zip(cands, idx)], axis=1)
        e = _quad_forms(M, X)
        m = float(e.min())
        keep = e <= m + _tie_tol(m)
        shortlists.append((m, flat[keep], e[keep]))
    best = min(m for m, _, _ in shortlists)
    tol = _tie_tol(best)
    for _, flat, e in shortlists:
        hit = np.nonzero(e <= best + tol)[0]
        if hit.size:
            f = int(flat[hit[0]])
            return np.array(np.unravel_index(f, sizes)), float(e[hit[0]])
    raise NumericalFailure("enumeration produced no minimizer")


def _sphere(M: np.ndarray, cands: list[np.ndarray]) -> tuple[np.ndarray, float, int]:
    """Depth-first branch and bound on the Cholesky factor of ``M``."""
    k = len(cands)
    try:
        Lc = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Cholesky factorization failed: {exc}") from None
    U = Lc.conj().T  # M = U^H U, U upper triangular
    best = math.inf
    leaves: list[tuple[tuple[int, ...], float]] = []
    idx = [0] * k
    x = np.zeros(k, dtype=complex if np.iscomplexobj(M) or any(np.iscomplexobj(c) for c in cands)
                 else float)
    nodes = 0

    def visit(level: int, partial: float) -> None:
        nonlocal best, nodes
        # interference from the already fixed coordinates level+1..k-1
        tail = U[level, level + 1:] @ x[level + 1:]
        c = cands[level]
        inc = np.abs(U[level, level] * c + tail) ** 2
        for j in sorted(range(len(c)), key=lambda j: (inc[j], j)):
            nodes += 1
            part = partial + float(inc[j])
            if part > best + _tie_tol(best):
                break  # children are sorted, the rest are worse
            idx[level] = j
            x[level] = c[j]
            if level == 0:
                e = float(_quad_forms(M, x[None, :])[0])
                if e <= best + _tie_tol(best):
                    leaves.append((tuple(idx), e))
                    best = min(best, e)
            else:
                visit(level - 1, part)
        x[level] = 0

    visit(k - 1, 0.0)
    if not leaves:
        raise NumericalFailure("sphere search found no candidate")
    tol = _tie_tol(best)
    ix, e = min((lv for lv in leaves if lv[1] <= best + tol), key=lambda lv: lv[0])
    return np.array(ix), e, nodes


def _assemble(cands, ix) -> np.ndarray:
    return np.array([c[i] for c, i in zip(cands, ix)])


def _check_square(J: np.ndarray, k: int) -> np.ndarray:
    J = np.asarray(J)
    if J.shape != (k, k):
        raise DomainError(f"J has shape {J.shape}, expected ({k}, {k}) for {k} symbols")
    return J


def precode_exact(J: np.ndarray, s: Sequence, a: Alphabet,
                  budget: int = BUDGET) -> tuple[np.ndarray, float]:
    """Exhaustive minimizer of ``x^H J x``; energy is normalized by ``1/k``."""
    J = _check_square(J, len(s))
    cands = _candidates(a, s)
    ix, e = _brute(J, cands, budget)
    return _assemble(cands, ix), e / len(s)


def precode_sphere(J: np.ndarray, s: Sequence, a: Alphabet,
                   return_nodes: bool = False):
    """Sphere-decoder minimizer, identical to :func:`precode_exact` by construction."""
    J = _check_square(J, len(s))
    cands = _candidates(a, s)
    ix, e, nodes = _sphere(J, cands)
    x = _assemble(cands, ix)
    if return_nodes:
        return x, e / len(s), nodes
    return x, e / len(s)


def real_embedding(J: np.ndarray) -> np.ndarray:
    """``2k x 2k`` real form of a Hermitian ``J`` acting on ``[Re x; Im x]``."""
    A, B = J.real, J.imag
    return np.block([[A, -B], [B, A]])


def precode_semidiscrete(J: np.ndarray, s: Sequence, a: Alphabet, solver: Solver | str = Solver.AUTO,
                         budget: int = BUDGET) -> tuple[np.ndarray, float]:
    """Minimizer over discrete real parts and free imaginary parts.

    For fixed real parts ``r`` the optimal imaginary parts are
    ``y = -A^{-1} B r`` (``J = A + jB``), leaving the discrete problem
    ``min r^T (A + B A^{-1} B) r`` over the real lattice sets.
    """
    if a.kind is not Kind.SEMI_DISCRETE:
        raise UnsupportedKind("precode_semidiscrete needs a semi-discrete alphabet")
    J = _check_square(J, len(s))
    A, B = J.real, J.imag
    try:
        S = A + B @ np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"reduced system is singular: {exc}") from None
    S = (S + S.T) / 2
    cands = []
    for sym in s:
        re, _ = a.real_axis_sets(sym)
        order = np.lexsort((-re, np.abs(re)))
        cands.append(re[order])
    count = _count(cands)
    solver = Solver(solver)
    if solver is Solver.SPHERE or (solver is Solver.AUTO and count > AUTO_BRUTE_MAX):
        ix, _, _ = _sphere(S, cands)
    else:
        ix, _ = _brute(S, cands, budget)
    r = _assemble(cands, ix).astype(float)
    y = -np.linalg.solve(A, B @ r)
    x = r + 1j * y
    return x, float(_quad_forms(J, x[None, :])[0]) / len(s)


# ---------------------------------------------------------------------------
# experiments


def replica_reference(a: Alphabet, alpha: float, cfg: FixedPointConfig | None = None) -> ReplicaSolution:
    """Replica prediction matching the alphabet family at load ``alpha``."""
    return solve(a.kind.value, alpha, a.base, cfg)


def _threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("VECODER_THREADS")
        threads = int(env) if env else min(8, os.cpu_count() or 1)
    return max(1, threads)


def _one_sample(cfg: ChannelConfig, a: Alphabet, prior: DataPrior, index: int):
    rng = sample_stream(cfg.seed, index)
    resamples = 0
    while True:
        H = sample_channel(cfg.k, cfg.n, rng)
        try:
            J = gramian_inverse(H)
            break
        except SingularChannel:
            resamples += 1
            if resamples > MAX_RESAMPLES:
                raise
    syms = prior.symbols
    s = [syms[i] for i in rng.choice(len(syms), size=cfg.k, p=prior.probabilities)]
    nodes = 0
    if a.kind is Kind.SEMI_DISCRETE:
        _, e = precode_semidiscrete(J, s, a, cfg.solver)
    else:
        count = _count(_candidates(a, s))
        if cfg.solver is Solver.SPHERE or (cfg.solver is Solver.AUTO and count > AUTO_BRUTE_MAX):
            _, e, nodes = precode_sphere(J, s, a, return_nodes=True)
        else:
            _, e = precode_exact(J, s, a)
    return e, resamples, nodes


def _budget_precheck(cfg: ChannelConfig, a: Alphabet) -> None:
    if cfg.solver is not Solver.BRUTE:
        return
    if a.kind is Kind.SEMI_DISCRETE:
        per = a.L
    else:
        per = len(enumerate_points(a, 0))
    _check_budget(per ** cfg.k, BUDGET)


def run_experiment(cfg: ChannelConfig, a: Alphabet, replica_ref: ReplicaSolution | None = None,
                   prior: DataPrior | None = None, threads: int | None = None) -> SimResult:
    """Average the exact minimum energy over ``cfg.samples`` channel draws."""
    prior = prior or DataPrior.uniform(a)
    _budget_precheck(cfg, a)
    energies = np.full(cfg.samples, np.nan)
    resamples = nodes = 0
    failures: list[tuple[int, str]] = []

    def task(i):
        try:
            return i, _one_sample(cfg, a, prior, i), None
        except BudgetExceeded:
            raise
        except VecoderError as exc:
            return i, None, f"{type(exc).__name__}: {exc}"

    n_threads = min(_threads(threads), cfg.samples)
    if n_threads == 1:
        results = [task(i) for i in range(cfg.samples)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(task, range(cfg.samples)))
    for i, out, err in results:
        if err is not None:
            failures.append((i, err))
            continue
        energies[i], r, nd = out
        resamples += r
        nodes += nd
    if len(failures) > FAIL_FRACTION * cfg.samples:
        first = "; ".join(f"sample {i}: {m}" for i, m in failures[:3])
        raise NumericalFailure(f"{len(failures)} of {cfg.samples} samples failed ({first})")

    ok = energies[np.isfinite(energies)]
    mean = float(ok.mean())
    stderr = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
    ref = None
    if replica_ref is not None:
        ref = replica_ref.es if replica_ref.converged else math.inf
    config = cfg.to_dict() | {"alphabet": a.to_dict(), "alpha": cfg.alpha}
    return SimResult(mean_es=mean, stderr=stderr, energies=[float(e) for e in energies],
                     replica_es=ref, seed=cfg.seed, config=config, resamples=resamples,
                     failures=failures, nodes=nodes)
