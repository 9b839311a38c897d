"""Rate certificates and contraction checks for projected consensus products."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BudgetExceeded, ContractViolation
from .graphs import (
    Digraph,
    compose_all,
    flocking_matrix,
    is_repeatedly_jointly_strongly_connected,
    mutually_reachable_classes,
    essential_vertices,
)
from .linalg import BlockMatrix, check_stochastic, mixed_norm, sandwich, subspace_intersection

EXHAUSTIVE_BUDGET = 2_000_000
_CHUNK = 1 << 15
MAX_ROUTE_AGENTS = 20


@dataclass(frozen=True)
class RateCertificate:
    m: int
    n: int
    q: int
    rho: float
    lam: float
    method: str
    samples: int | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _spectral_norms(mats: np.ndarray) -> np.ndarray:
    # largest singular value via the Gram matrix; cheaper than a batched SVD
    gram = np.swapaxes(mats, -1, -2) @ mats
    return np.sqrt(np.clip(np.linalg.eigvalsh(gram)[..., -1], 0.0, None))


def _require_trivial_intersection(P_list) -> None:
    if subspace_intersection(P_list).dim != 0:
        raise ContractViolation("projector images share a nonzero vector")


def _exhaustive_rho(P: np.ndarray, length: int) -> float:
    m, n = P.shape[0], P.shape[1]
    full = (1 << m) - 1
    bits = 1 << np.arange(m)
    popcount = np.array([bin(x).count("1") for x in range(full + 1)])
    best = 0.0

    def extend(prods, masks, left):
        nonlocal best
        if left == 0:
            sel = masks == full
            if sel.any():
                best = max(best, float(_spectral_norms(prods[sel]).max()))
            return
        new = (prods[:, None] @ P[None]).reshape(-1, n, n)
        new_masks = (masks[:, None] | bits[None]).reshape(-1)
        # drop prefixes that can no longer cover every index
        keep = m - popcount[new_masks] <= left - 1
        new, new_masks = new[keep], new_masks[keep]
        for s in range(0, len(new), _CHUNK):
            extend(new[s:s + _CHUNK], new_masks[s:s + _CHUNK], left - 1)

    extend(P.copy(), bits.copy(), length - 1)
    return best


def _covering_sequence(rng: np.random.Generator, m: int, length: int) -> np.ndarray:
    seq = rng.integers(m, size=length)
    slots = rng.choice(length, size=m, replace=False)
    seq[slots] = rng.permutation(m)
    return seq


def rho_bound(P_list: Sequence[np.ndarray], method: str = "exhaustive",
              seed: int = 0, samples: int = 10_000) -> RateCertificate:
    """Largest spectral norm of a covering projector product of length ``(m-1)^2 + 1``.

    ``method="sampled"`` evaluates ``samples`` seeded random covering
    sequences and so only gives a lower estimate of the maximum.
    """
    P = np.asarray(P_list, dtype=float)
    m, n = P.shape[0], P.shape[1]
    if m < 2:
        raise ContractViolation("rate certificates need at least two agents")
    _require_trivial_intersection(P_list)
    q = (m - 1) ** 2
    if method == "exhaustive":
        if m ** (q + 1) > EXHAUSTIVE_BUDGET:
            raise BudgetExceeded(f"{m}^{q + 1} products exceed the budget of {EXHAUSTIVE_BUDGET}")
        rho = _exhaustive_rho(P, q + 1)
        used = None
    elif method == "sampled":
        rng = np.random.default_rng(seed)
        rho = 0.0
        for s in range(0, samples, _CHUNK):
            k = min(_CHUNK, samples - s)
            seqs = np.array([_covering_sequence(rng, m, q + 1) for _ in range(k)])
            prods = P[seqs[:, 0]]
            for col in range(1, q + 1):
                prods = prods @ P[seqs[:, col]]
            rho = max(rho, float(_spectral_norms(prods).max()))
        used = samples
    else:
        raise ContractViolation(f"unknown method {method!r}")
    rho = min(rho, 1.0)
    return RateCertificate(m=m, n=n, q=q, rho=rho, lam=rate_lambda(rho, m), method=method,
                           samples=used)


def rate_lambda(rho: float, m: int) -> float:
    if m < 2:
        raise ContractViolation("rate formula needs at least two agents")
    if not 0.0 <= rho < 1.0:
        raise ContractViolation(f"rho must lie in [0, 1), got {rho}")
    q = (m - 1) ** 2
    return float((1.0 - (m - 1) * (1.0 - rho) / m ** q) ** (1.0 / q))


def lambda_bound(cert: RateCertificate) -> float:
    return rate_lambda(cert.rho, cert.m)


def nominal_bound(S_seq: Sequence[np.ndarray]) -> np.ndarray:
    """Ordered product ``S_q ... S_1`` of a time-ordered sequence."""
    if len(S_seq) == 0:
        raise ContractViolation("nominal bound of an empty sequence is undefined")
    out = check_stochastic(S_seq[0])
    for S in S_seq[1:]:
        out = check_stochastic(S) @ out
    return out


def transition_product(P_list: Sequence[np.ndarray], S_seq: Sequence[np.ndarray]) -> BlockMatrix:
    """``sandwich(P, S_q) ... sandwich(P, S_1)``; the bare block-diagonal P when empty."""
    out = BlockMatrix.block_diagonal(P_list)
    if len(S_seq) == 0:
        return out
    out = sandwich(P_list, S_seq[0])
    for S in S_seq[1:]:
        out = sandwich(P_list, S) @ out
    return out


def block_complete(graph_seq: Sequence[Digraph], i: int, j: int) -> bool:
    """Is there a route from ``j`` to ``i`` over ``graph_seq`` visiting every vertex?

    Step ``k`` of the route follows an arc of ``graph_seq[k]`` (self-arcs
    allowed). Dynamic programming over (vertex, visited-set) states.
    """
    if not graph_seq:
        raise ContractViolation("block_complete needs a nonempty sequence")
    m = graph_seq[0].m
    if m > MAX_ROUTE_AGENTS:
        raise BudgetExceeded(f"route search limited to m <= {MAX_ROUTE_AGENTS}")
    full = (1 << m) - 1
    masks = np.arange(1 << m)
    reach = np.zeros((m, 1 << m), dtype=bool)
    reach[j, 1 << j] = True
    for G in graph_seq:
        if G.m != m:
            raise ContractViolation("graphs in the sequence differ in vertex count")
        nxt = np.zeros_like(reach)
        for w in range(m):
            cand = reach[G.adj[w]].any(axis=0)
            nxt[w, masks[cand] | (1 << w)] = True
        reach = nxt
    return bool(reach[i, full])


class ContractionResult(NamedTuple):
    mixed_norm: float
    is_contraction: bool


def contraction_check(P_list: Sequence[np.ndarray], graph_seq: Sequence[Digraph],
                      l: int) -> ContractionResult:
    """Mixed norm of the flocking transition product over a qualifying sequence."""
    m = len(P_list)
    _require_trivial_intersection(P_list)
    need = (m - 1) ** 2 * l
    if len(graph_seq) < max(need, l):
        raise ContractViolation(f"sequence of length {len(graph_seq)} is shorter than (m-1)^2 l = {need}")
    if not is_repeatedly_jointly_strongly_connected(graph_seq, l):
        raise ContractViolation("graph sequence is not repeatedly jointly strongly connected")
    norm = mixed_norm(transition_product(P_list, [flocking_matrix(G) for G in graph_seq]))
    return ContractionResult(norm, norm < 1 - 1e-12)


def prefix_norm_decay(P_list: Sequence[np.ndarray], graph_seq: Sequence[Digraph],
                   l: int) -> list[tuple[int, float]]:
    """Mixed norm of every prefix product ``M_t``, ``t = 0 .. len(graph_seq)``."""
    _require_trivial_intersection(P_list)
    if len(graph_seq) >= l and not is_repeatedly_jointly_strongly_connected(graph_seq, l):
        raise ContractViolation("graph sequence is not repeatedly jointly strongly connected")
    M = BlockMatrix.block_diagonal(P_list)
    out = [(0, mixed_norm(M))]
    for t, G in enumerate(graph_seq, start=1):
        M = sandwich(P_list, flocking_matrix(G)) @ M
        out.append((t, mixed_norm(M)))
    return out


@dataclass(frozen=True)
class NecessityWitness:
    """An invariant vector showing a split graph sequence cannot contract.

    ``closed_class`` is a mutually reachable class of essential vertices of
    the composed graph; ``z`` is a nonzero common image vector of the
    agents outside it.
    """

    closed_class: frozenset[int]
    outside: tuple[int, ...]
    z: np.ndarray
    fixed_point_residual: float
    eigen_gap: float


def necessity_witness(P_list: Sequence[np.ndarray], graph_seq: Sequence[Digraph]) -> NecessityWitness:
    """Exhibit an eigenvalue at 1 of the transition product over a non-strongly-connected window."""
    G = compose_all(list(graph_seq))
    ess = essential_vertices(G)
    cls = next(c for c in mutually_reachable_classes(G) if c <= ess)
    if len(cls) == len(P_list):
        raise ContractViolation("composed graph is strongly connected; no witness exists")
    outside = tuple(v for v in range(len(P_list)) if v not in cls)
    common = subspace_intersection([P_list[v] for v in outside])
    if common.dim == 0:
        raise ContractViolation("agents outside the closed class share no image vector")
    z = common.basis[:, 0]
    # restricted product over the agents outside the class
    Pbar = [P_list[v] for v in outside]
    C = BlockMatrix.block_diagonal(Pbar)
    for Gk in graph_seq:
        S = flocking_matrix(Gk)[np.ix_(outside, outside)]
        C = sandwich(Pbar, S) @ C
    zbar = np.tile(z, len(outside))
    residual = float(np.linalg.norm(C.data @ zbar - zbar))
    full = transition_product(P_list, [flocking_matrix(Gk) for Gk in graph_seq])
    gap = float(np.abs(np.linalg.eigvals(full.data) - 1.0).min())
    return NecessityWitness(cls, outside, z, residual, gap)
