"""Low- and high-SNR reference rates and the pathwise zero-forcing design.

At high SNR every interfering path must be zero-forced by someone: either the
victim user (Rx side, up to Nr - d directions) or the BS owning the link
(Tx side). A PathPartition records who handles each interfering path.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Sequence, Tuple, Union

import numpy as np

from app.core.channel import ChannelRealization, Scenario, pathwise_expected_gram
from app.core.exceptions import DegenerateGeometryError, FeasibilityError, ValidationException
from app.core.numkern import (
    dominant_right_vectors,
    hermitian_eig,
    hermitize,
    logdet_pd,
    proj_orth_complement,
    psd_sqrt,
    range_inv_sqrt,
)
from app.core.rate import BeamformerSet, make_beams, pathwise_rx_covariances

logger = logging.getLogger(__name__)

Handler = Literal["rx", "tx"]
# Instances with at most this many intercell interfering paths can be enumerated
BRUTE_FORCE_MAX_PATHS = 12


@dataclass(frozen=True)
class PathPartition:
    """assignments[(victim, bs)][l] says who zero-forces path l of the link bs -> victim."""
    assignments: Dict[Tuple[int, int], Tuple[Handler, ...]]

    def rx_paths(self, k: int) -> List[Tuple[int, int]]:
        return [(b, l) for (v, b), hs in self.assignments.items() if v == k for l, h in enumerate(hs) if h == "rx"]

    def tx_paths(self, b: int) -> List[Tuple[int, int]]:
        return [(v, l) for (v, bs), hs in self.assignments.items() if bs == b for l, h in enumerate(hs) if h == "tx"]


@dataclass(frozen=True, eq=False)
class ZfDesign:
    partition: PathPartition
    receivers: Tuple[np.ndarray, ...]   # F_k, orthonormal columns
    tx_filters: Tuple[np.ndarray, ...]  # G'_k, orthonormal columns
    beams: BeamformerSet                # equal-power Tx filters built on G'_k
    wsr_high_snr: float


# --- LOW SNR ---

def _per_user_powers(scenario: Scenario, powers) -> List[np.ndarray]:
    if len(powers) != scenario.n_users:
        raise ValidationException("one power vector per user expected", details={"got": len(powers)})
    out = []
    for k, p in enumerate(powers):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.size != scenario.streams[k] or np.any(p < 0):
            raise ValidationException("stream powers must be nonnegative, one per stream", details={"user": k})
        out.append(p)
    return out


def _top_gains(h: np.ndarray, d: int) -> np.ndarray:
    s = np.linalg.svd(h, compute_uv=False) ** 2
    gains = np.zeros(d)
    gains[:min(d, s.size)] = s[:d]
    return gains


def low_snr_wsr_icsit(scenario: Scenario, h: ChannelRealization, powers: Sequence) -> float:
    """sum_k u_k ln det(I + Sigma^2(H_{k,b_k}) P_k), the WSR of matched filters with
    the interference dropped."""
    powers = _per_user_powers(scenario, powers)
    total = 0.0
    for k in range(scenario.n_users):
        gains = _top_gains(h[k, scenario.serving[k]], scenario.streams[k])
        total += scenario.weights[k] * float(np.sum(np.log1p(gains * powers[k])))
    return total


def matched_filter_beams(scenario: Scenario, h: ChannelRealization, powers: Sequence) -> BeamformerSet:
    powers = _per_user_powers(scenario, powers)
    beams = [
        dominant_right_vectors(h[k, scenario.serving[k]], scenario.streams[k]) * np.sqrt(powers[k])
        for k in range(scenario.n_users)
    ]
    return make_beams(beams, n_cells=scenario.n_cells)


def low_snr_wsr_pwcsit(scenario: Scenario, covariances: Sequence[np.ndarray]) -> float:
    """sum_k u_k ln det(I + Hr^H Hr D^2 diag(Ht^H Q_k Ht)) on the serving links."""
    if len(covariances) != scenario.n_users:
        raise ValidationException("one covariance per user expected", details={"got": len(covariances)})
    total = 0.0
    for k, q in enumerate(covariances):
        link = scenario.link(k, scenario.serving[k])
        path_power = np.einsum("tl,ts,sl->l", link.ht.conj(), np.asarray(q, dtype=complex), link.ht).real
        root = np.sqrt(np.clip(path_power, 0.0, None)) * link.amplitudes
        gram = link.hr.conj().T @ link.hr
        # det(I + X Y) = det(I + Y^1/2 X Y^1/2) for diagonal Y >= 0
        sym = hermitize(np.eye(link.n_paths) + root[:, None] * gram * root[None, :])
        total += scenario.weights[k] * float(logdet_pd(sym))
    return total


# --- PATH PARTITION ---

def _intercell_links(scenario: Scenario) -> Iterator[Tuple[int, int]]:
    """(victim, bs) pairs where bs serves someone and is not the victim's own BS."""
    for v in range(scenario.n_users):
        for b in range(scenario.n_cells):
            if b != scenario.serving[v] and scenario.users_of(b):
                yield v, b


def _intracell_assignments(scenario: Scenario) -> Dict[Tuple[int, int], Tuple[Handler, ...]]:
    out = {}
    for v in range(scenario.n_users):
        b = scenario.serving[v]
        if len(scenario.users_of(b)) > 1:
            out[(v, b)] = ("tx",) * scenario.link(v, b).n_paths
    return out


def _violations(scenario: Scenario, partition: PathPartition) -> List[Dict]:
    found = []
    for k in range(scenario.n_users):
        used, capacity = len(partition.rx_paths(k)), scenario.nr[k] - scenario.streams[k]
        if used > capacity:
            found.append({"side": "rx", "user": k, "handled": used, "capacity": capacity})
    for b in range(scenario.n_cells):
        served = sum(scenario.streams[k] for k in scenario.users_of(b))
        used, capacity = len(partition.tx_paths(b)), scenario.nt[b] - served
        if used > capacity:
            found.append({"side": "tx", "bs": b, "handled": used, "capacity": capacity})
    return found


def _enumerate_partitions(scenario: Scenario) -> Iterator[PathPartition]:
    links = list(_intercell_links(scenario))
    slots = [(v, b, l) for v, b in links for l in range(scenario.link(v, b).n_paths)]
    if len(slots) > BRUTE_FORCE_MAX_PATHS:
        raise ValidationException(
            "too many interfering paths for exhaustive partition search",
            details={"paths": len(slots), "limit": BRUTE_FORCE_MAX_PATHS},
        )
    base = _intracell_assignments(scenario)
    for choice in itertools.product(("rx", "tx"), repeat=len(slots)):
        assignments = dict(base)
        for (v, b) in links:
            assignments[(v, b)] = tuple(
                h for (sv, sb, _), h in zip(slots, choice) if (sv, sb) == (v, b)
            )
        yield PathPartition(assignments=assignments)


def feasible_partition_exists(scenario: Scenario) -> bool:
    """Exhaustive check over every Tx/Rx split; only for tiny instances."""
    return any(not _violations(scenario, p) for p in _enumerate_partitions(scenario))


def default_partition(scenario: Scenario) -> PathPartition:
    """Greedy split: each victim claims its strongest intercell paths for Rx-side
    ZF (up to Nr - d); everything else, intracell paths included, goes to the BS.

    Falls back to exhaustive search on small instances when the greedy split
    breaks a dimension count.
    """
    assignments = _intracell_assignments(scenario)
    for k in range(scenario.n_users):
        links = [b for v, b in _intercell_links(scenario) if v == k]
        candidates = [(scenario.link(k, b).amplitudes[l], b, l)
                      for b in links for l in range(scenario.link(k, b).n_paths)]
        candidates.sort(key=lambda c: -c[0])
        claimed = {(b, l) for _, b, l in candidates[:max(scenario.nr[k] - scenario.streams[k], 0)]}
        for b in links:
            n = scenario.link(k, b).n_paths
            assignments[(k, b)] = tuple("rx" if (b, l) in claimed else "tx" for l in range(n))
    partition = PathPartition(assignments=assignments)

    violations = _violations(scenario, partition)
    if not violations:
        return partition
    n_slots = sum(scenario.link(v, b).n_paths for v, b in _intercell_links(scenario))
    if n_slots <= BRUTE_FORCE_MAX_PATHS:
        logger.debug("greedy path split infeasible, searching %d splits", 2 ** n_slots)
        for candidate in _enumerate_partitions(scenario):
            if not _violations(scenario, candidate):
                return candidate
    raise FeasibilityError("no Tx/Rx split of the interfering paths fits the antenna counts",
                           details=violations[0])


# --- HIGH SNR ZERO-FORCING ---

def _rx_projector(scenario: Scenario, partition: PathPartition, k: int) -> np.ndarray:
    cols = [scenario.link(k, b).hr[:, l] for b, l in partition.rx_paths(k)]
    return proj_orth_complement(np.stack(cols, axis=1) if cols else np.zeros((scenario.nr[k], 0)))


def _tx_projector(scenario: Scenario, partition: PathPartition, k: int) -> np.ndarray:
    """Projector off the BS-handled directions at b_k, user k's own link excluded."""
    b = scenario.serving[k]
    cols = [scenario.link(v, b).ht[:, l] for v, l in partition.tx_paths(b) if v != k]
    return proj_orth_complement(np.stack(cols, axis=1) if cols else np.zeros((scenario.nt[b], 0)))


def high_snr_zf_pwcsit(scenario: Scenario, partition: PathPartition,
                       p_c: Union[float, Sequence[float], None] = None) -> ZfDesign:
    """Joint Tx/Rx pathwise ZF with equal power over the streams of each BS.

    wsr_high_snr = sum_k u_k sum_j ln(1 + mu_j p) with mu_j the top eigenvalues
    of S^1/2 D^2 diag(T) S^1/2.
    """
    violations = _violations(scenario, partition)
    if violations:
        raise FeasibilityError("path split exceeds the antenna counts", details=violations[0])
    if p_c is None:
        budgets = np.asarray(scenario.power, dtype=float)
    else:
        budgets = np.broadcast_to(np.asarray(p_c, dtype=float), (scenario.n_cells,))
    share = [budgets[b] / max(sum(scenario.streams[k] for k in scenario.users_of(b)), 1)
             for b in range(scenario.n_cells)]

    receivers, tx_filters, beams = [], [], []
    total = 0.0
    for k in range(scenario.n_users):
        b, d = scenario.serving[k], scenario.streams[k]
        link = scenario.link(k, b)

        p_rx = _rx_projector(scenario, partition, k)
        t = hermitize(link.hr.conj().T @ p_rx @ link.hr)
        x_rx = range_inv_sqrt(t, reference=np.linalg.norm(link.hr, 2) ** 2)
        p_tx = _tx_projector(scenario, partition, k)
        s = hermitize(link.ht.conj().T @ p_tx @ link.ht)
        x_tx = range_inv_sqrt(s, reference=np.linalg.norm(link.ht, 2) ** 2)
        if x_rx.shape[1] == 0 or x_tx.shape[1] == 0:
            raise DegenerateGeometryError(
                "zero-forcing removes the whole useful signal",
                details={"user": k, "rank_T": x_rx.shape[1], "rank_S": x_tx.shape[1]},
            )
        receivers.append(p_rx @ link.hr @ x_rx)
        g_prime = p_tx @ link.ht @ x_tx
        tx_filters.append(g_prime)

        s_half = psd_sqrt(s)
        pairs = hermitian_eig(hermitize(s_half @ np.diag(link.amplitudes ** 2 * np.diag(t).real) @ s_half))
        mu = np.clip(pairs.values[:d], 0.0, None)
        total += scenario.weights[k] * float(np.sum(np.log1p(mu * share[b])))

        # eigenvectors of the L x L product mapped onto the columns of G'
        w = x_tx.conj().T @ s_half @ pairs.vectors[:, :d]
        g = g_prime @ w * np.sqrt(share[b])
        if g.shape[1] < d:
            g = np.hstack([g, np.zeros((g.shape[0], d - g.shape[1]), dtype=complex)])
        beams.append(g)

    logger.debug("pathwise ZF design: high-SNR WSR %.6g nats", total)
    return ZfDesign(
        partition=partition,
        receivers=tuple(receivers),
        tx_filters=tuple(tx_filters),
        beams=make_beams(beams, n_cells=scenario.n_cells),
        wsr_high_snr=total,
    )


def high_snr_zf_check_icsit(scenario: Scenario, h: ChannelRealization, receivers: Sequence[np.ndarray],
                            beams: Union[BeamformerSet, Sequence[np.ndarray]]) -> float:
    """max_{i != k} ||F_k^H H_{k,b_i} G_i||_F / (||F_k|| ||G_i||); zero iff joint ZF holds."""
    gs = beams.beams if isinstance(beams, BeamformerSet) else tuple(np.asarray(g) for g in beams)
    worst = 0.0
    for k in range(scenario.n_users):
        f = np.atleast_2d(np.asarray(receivers[k]).T).T
        nf = np.linalg.norm(f)
        if nf == 0.0:
            continue
        for i in range(scenario.n_users):
            ng = np.linalg.norm(gs[i])
            if i == k or ng == 0.0:
                continue
            leak = f.conj().T @ h[k, scenario.serving[i]] @ np.atleast_2d(gs[i].T).T
            worst = max(worst, float(np.linalg.norm(leak) / (nf * ng)))
    return worst


# --- IMPLICIT RECEIVERS ---

def implicit_receivers(scenario: Scenario, beams: BeamformerSet) -> Tuple[np.ndarray, ...]:
    """F_i = R_i^-1 H_{r,i,b_i}, with R_i the phase-averaged receive covariance."""
    covs = pathwise_rx_covariances(scenario, beams)
    return tuple(
        np.linalg.solve(covs.r[i], scenario.link(i, scenario.serving[i]).hr)
        for i in range(scenario.n_users)
    )


def implicit_rx_leakage(scenario: Scenario, beams: BeamformerSet) -> float:
    """Largest ratio of interference to useful power seen through the implicit receivers."""
    receivers = implicit_receivers(scenario, beams)
    q = beams.covariances
    worst = 0.0
    for k, f in enumerate(receivers):
        def through(i):
            gram = pathwise_expected_gram(scenario.link(k, scenario.serving[i]), q[i])
            return float(np.trace(f.conj().T @ gram @ f).real)

        useful = through(k)
        if useful <= 0.0:
            continue
        interference = sum(through(i) for i in range(scenario.n_users) if i != k)
        worst = max(worst, interference / useful)
    return worst
