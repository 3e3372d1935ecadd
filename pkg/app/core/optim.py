"""Iterative beamformer designs.

- wsmse:            alternating minimization of the weighted sum MSE (perfect CSIT)
- minorize_icsit:   tangent minorization of the WSR; generalized eigenvector
                    beamformers with interference-leakage-aware water-filling
- minorize_pwcsit:  same iteration on the pathwise large-array EWSR (no
                    channel realization needed)
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from app.core.channel import ChannelRealization, PathwiseLink, Scenario
from app.core.exceptions import NumericFailure, SingularPencilError, ValidationException
from app.core.numkern import (
    BISECTION_MAX_ITER,
    BISECTION_RTOL,
    Stream,
    dominant_right_vectors,
    generalized_eig_top,
    hermitize,
    logdet_pd,
    waterfill_bs,
    waterfill_powers,
)
from app.core.rate import (
    BUDGET_SLACK,
    BeamformerSet,
    bs_powers,
    check_beams,
    make_beams,
    massive_ewsr,
    mmse_rx,
    mse_matrix,
    pathwise_rx_covariances,
    rx_covariances,
    wsr,
)

logger = logging.getLogger(__name__)

Algorithm = Literal["wsmse", "minorize_icsit", "minorize_pwcsit"]
ALGORITHMS: Tuple[str, ...] = ("wsmse", "minorize_icsit", "minorize_pwcsit")
PERFECT_CSIT = frozenset({"wsmse", "minorize_icsit"})

ASCENT_SLACK = 1e-8
# Singular pencils at lambda = 0 are regularized by this fraction of trace(A)/dim
PENCIL_FLOOR = 1e-12
LEAKAGE_TOL = 1e-10
CONVERGED_STREAK = 3
KKT_TOL = 1e-5
# Largest eigenvalue allowed for G^H C G / alpha in the pathwise own-term matrix
CURVATURE_CAP = 0.99
DAMPING_STEPS = 8
GRADIENT_STEPS = 40

Update = Literal["full", "damped", "gradient", "none"]


@dataclass(frozen=True, eq=False)
class OptimizerState:
    beams: BeamformerSet
    receivers: Tuple[np.ndarray, ...] = ()
    weights: Tuple[np.ndarray, ...] = ()
    expansion: Tuple[np.ndarray, ...] = ()
    iteration: int = 0
    objective_history: Tuple[float, ...] = ()
    update: Update = "full"


@dataclass(frozen=True, eq=False)
class OptimizeResult:
    beams: BeamformerSet
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool
    objective_history: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class Surrogate:
    """sum_k w_k ln det(I + G_k^H B_k G_k) - tr(G_k^H A_k G_k) around an expansion point.

    own[k] is C_k, with u_k C_k G_k the gradient of user k's own rate term, so
    the objective's gradient in G_k is (u_k C_k - A_k) G_k.
    """
    b: Tuple[np.ndarray, ...]
    a: Tuple[np.ndarray, ...]
    weights: Tuple[float, ...]
    own: Tuple[np.ndarray, ...]


# --- INITIALIZATION ---

def init_beamformers(scenario: Scenario, strategy: str = "matched",
                     rng: Optional[np.random.Generator] = None,
                     h: Optional[ChannelRealization] = None) -> BeamformerSet:
    """Matched (dominant directions of the serving channel, or of D Ht^H without
    a realization) or random Gaussian beams, scaled to an equal per-user split
    of every BS budget."""
    beams = []
    for k in range(scenario.n_users):
        bs = scenario.serving[k]
        nt, d = scenario.nt[bs], scenario.streams[k]
        share = scenario.power[bs] / len(scenario.users_of(bs))
        if strategy == "matched":
            if h is not None:
                surrogate = h[k, bs]
            else:
                link = scenario.link(k, bs)
                surrogate = link.d @ link.ht.conj().T
            g = dominant_right_vectors(surrogate, d) * np.sqrt(share / d)
        elif strategy == "random":
            if rng is None:
                raise ValidationException("random initialization needs a generator")
            g = (rng.standard_normal((nt, d)) + 1j * rng.standard_normal((nt, d))) / np.sqrt(2.0)
            g = g * np.sqrt(share) / np.linalg.norm(g)
        else:
            raise ValidationException(f"unknown initialization strategy '{strategy}'")
        beams.append(g)
    return make_beams(beams, n_cells=scenario.n_cells)


# --- SURROGATE MATRICES ---

def _chol(m: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(hermitize(m), lower=True)
    except np.linalg.LinAlgError as e:
        raise NumericFailure(f"covariance is not positive definite: {e}")


def _whitened_gram(chol: np.ndarray, x: np.ndarray) -> np.ndarray:
    """x^H R^-1 x for R = chol chol^H."""
    w = scipy.linalg.solve_triangular(chol, x, lower=True)
    return hermitize(w.conj().T @ w)


def _removal_factor(rbar: np.ndarray, v: np.ndarray) -> np.ndarray:
    """X with X X^H = Rbar^-1 - (Rbar + V V^H)^-1.

    Woodbury gives Rbar^-1 V (I + V^H Rbar^-1 V)^-1 V^H Rbar^-1, which is
    factored instead of subtracting two inverses.
    """
    y = scipy.linalg.cho_solve((_chol(rbar), True), v)
    inner = _chol(np.eye(v.shape[1]) + v.conj().T @ y)
    return scipy.linalg.solve_triangular(inner, y.conj().T, lower=True).conj().T


def surrogate_matrices_icsit(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet) -> Surrogate:
    """B_k = H^H Rbar_k^-1 H on the serving link and
    A_k = sum_{i != k} u_i H_{i,b_k}^H (Rbar_i^-1 - R_i^-1) H_{i,b_k}, at the current beams."""
    covs = rx_covariances(scenario, h, beams)
    factors = [
        _removal_factor(covs.rbar[i], h[i, scenario.serving[i]] @ beams.beams[i])
        for i in range(scenario.n_users)
    ]
    bmats, amats, own = [], [], []
    for k in range(scenario.n_users):
        bs = scenario.serving[k]
        bmats.append(_whitened_gram(_chol(covs.rbar[k]), h[k, bs]))
        own.append(_whitened_gram(_chol(covs.r[k]), h[k, bs]))
        a = np.zeros((scenario.nt[bs], scenario.nt[bs]), dtype=complex)
        for i in range(scenario.n_users):
            if i == k:
                continue
            y = h[i, bs].conj().T @ factors[i]
            a += scenario.weights[i] * (y @ y.conj().T)
        amats.append(hermitize(a))
    return Surrogate(b=tuple(bmats), a=tuple(amats), weights=tuple(scenario.weights), own=tuple(own))


def _path_gram(link: PathwiseLink, proj: np.ndarray) -> np.ndarray:
    """Ht diag(||proj_l||^2 a_l^2) Ht^H for proj = W^H Hr, i.e. Ht diag(Hr^H W W^H Hr) D^2 Ht^H."""
    weights = np.sum(np.abs(proj) ** 2, axis=0) * link.amplitudes ** 2
    return hermitize((link.ht * weights) @ link.ht.conj().T)


def _own_paths(link: PathwiseLink, g: np.ndarray) -> np.ndarray:
    """V with V V^H = Hr D diag(Ht^H G G^H Ht) D Hr^H."""
    energy = np.sum(np.abs(link.ht.conj().T @ g) ** 2, axis=1)
    return link.hr * (link.amplitudes * np.sqrt(energy))


def _tangent_own_matrix(c: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, float]:
    """(B, alpha) with alpha B G (I + G^H B G)^-1 = C G at the given G.

    B = C/alpha + (C/alpha) G (I - S)^-1 G^H (C/alpha), S = G^H C G / alpha,
    alpha >= 1 keeping S below CURVATURE_CAP. With a single serving path and
    alpha = 1 this equals Ht diag(Hr^H Rbar^-1 Hr) D^2 Ht^H.
    """
    s = hermitize(g.conj().T @ c @ g)
    top = float(scipy.linalg.eigvalsh(s)[-1]) if s.size else 0.0
    alpha = max(1.0, top / CURVATURE_CAP)
    scaled = c / alpha
    chol = _chol(np.eye(g.shape[1]) - s / alpha)
    t = scipy.linalg.solve_triangular(chol, (scaled @ g).conj().T, lower=True).conj().T
    return hermitize(scaled + t @ t.conj().T), alpha


def surrogate_matrices_pwcsit(scenario: Scenario, beams: BeamformerSet) -> Surrogate:
    """Pathwise counterparts of (B_k, A_k) built from the phase-averaged covariances.

    A_k = sum_{i != k} u_i Ht diag(Hr^H (Rbar_i^-1 - R_i^-1) Hr) D^2 Ht^H over
    the links from b_k. C_k = Ht diag(Hr^H R_k^-1 Hr) D^2 Ht^H on the serving
    link, and B_k is the matrix tangent to it (see _tangent_own_matrix).
    """
    covs = pathwise_rx_covariances(scenario, beams)
    factors = [
        _removal_factor(covs.rbar[i], _own_paths(scenario.link(i, scenario.serving[i]), beams.beams[i]))
        for i in range(scenario.n_users)
    ]
    bmats, amats, own, weights = [], [], [], []
    for k in range(scenario.n_users):
        bs = scenario.serving[k]
        link = scenario.link(k, bs)
        c = _path_gram(link, scipy.linalg.solve_triangular(_chol(covs.r[k]), link.hr, lower=True))
        b, alpha = _tangent_own_matrix(c, beams.beams[k])
        own.append(c)
        bmats.append(b)
        weights.append(scenario.weights[k] * alpha)
        a = np.zeros((scenario.nt[bs], scenario.nt[bs]), dtype=complex)
        for i in range(scenario.n_users):
            if i == k:
                continue
            cross = scenario.link(i, bs)
            a += scenario.weights[i] * _path_gram(cross, factors[i].conj().T @ cross.hr)
        amats.append(hermitize(a))
    return Surrogate(b=tuple(bmats), a=tuple(amats), weights=tuple(weights), own=tuple(own))


def surrogate_value(scenario: Scenario, beams: BeamformerSet, surrogate: Surrogate) -> float:
    """sum_k w_k ln det(I + G_k^H B_k G_k) - tr(G_k^H A_k G_k), up to constants of the expansion point."""
    value = 0.0
    for k, g in enumerate(beams.beams):
        gain = hermitize(np.eye(g.shape[1]) + g.conj().T @ surrogate.b[k] @ g)
        value += surrogate.weights[k] * float(logdet_pd(gain)) - np.trace(g.conj().T @ surrogate.a[k] @ g).real
    return value


# --- MINORIZATION ---

def _pencil_streams(scenario: Scenario, users: Sequence[int], surrogate: Surrogate, lam: float,
                    floors: Optional[Dict[int, float]] = None):
    """Top generalized eigenvectors of (B_k, A_k + lam I) and their stream gains."""
    out = {}
    for k in users:
        b, a = surrogate.b[k], surrogate.a[k]
        shift = lam if floors is None else floors[k]
        pairs = generalized_eig_top(b, a + shift * np.eye(a.shape[0]), scenario.streams[k])
        v = pairs.vectors
        quad_b = v.conj().T @ b @ v
        quad_a = v.conj().T @ (a + shift * np.eye(a.shape[0])) @ v
        for quad in (quad_b, quad_a):
            off = quad - np.diag(np.diag(quad))
            scale = max(np.abs(np.diag(quad)).max(), np.finfo(float).tiny)
            if np.abs(off).max(initial=0.0) > LEAKAGE_TOL * scale:
                logger.debug("user %d: generalized eigenbasis leaves off-diagonal leakage %.3g",
                             k, float(np.abs(off).max() / scale))
        sigma1 = np.clip(np.diag(quad_b).real, 0.0, None)
        sigma2 = np.clip(np.einsum("ti,ts,si->i", v.conj(), a, v).real, 0.0, None)
        out[k] = (v, sigma1, sigma2)
    return out


def _stacked(scenario: Scenario, users: Sequence[int], surrogate: Surrogate,
             streams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = np.concatenate([np.full(scenario.streams[k], surrogate.weights[k]) for k in users])
    s1 = np.concatenate([streams[k][1] for k in users])
    s2 = np.concatenate([streams[k][2] for k in users])
    return u, s1, s2


def _allocate(scenario: Scenario, users: Sequence[int], budget: float, surrogate: Surrogate):
    """Joint search of the multiplier and the eigen-directions for one group of
    users sharing a budget, finished by water-filling on the final directions."""

    def total(lam: float, streams) -> float:
        u, s1, s2 = _stacked(scenario, users, surrogate, streams)
        return float(waterfill_powers(u, s1, s2, lam).sum())

    chosen = None
    traces = {k: np.trace(surrogate.a[k]).real for k in users}
    if all(t > 0 for t in traces.values()):
        floors = {k: PENCIL_FLOOR * traces[k] / surrogate.a[k].shape[0] for k in users}
        try:
            streams = _pencil_streams(scenario, users, surrogate, 0.0, floors=floors)
        except SingularPencilError as e:
            logger.debug("unshifted pencil of users %s is singular (%s); bisecting", list(users), e.message)
        else:
            if total(0.0, streams) <= budget:
                chosen = streams

    if chosen is None:
        lo, hi = 0.0, 1.0
        hi_streams = _pencil_streams(scenario, users, surrogate, hi)
        while total(hi, hi_streams) > budget:
            lo, hi = hi, 2.0 * hi
            if not np.isfinite(hi):
                raise NumericFailure("multiplier bracket diverged", details={"users": list(users)})
            hi_streams = _pencil_streams(scenario, users, surrogate, hi)
        chosen = hi_streams
        for _ in range(BISECTION_MAX_ITER):
            if hi - lo <= 1e-15 * hi:
                break
            mid = 0.5 * (lo + hi)
            mid_streams = _pencil_streams(scenario, users, surrogate, mid)
            t = total(mid, mid_streams)
            if abs(t - budget) <= BISECTION_RTOL * budget:
                chosen = mid_streams
                break
            if t > budget:
                lo = mid
            else:
                hi, chosen = mid, mid_streams

    u, s1, s2 = _stacked(scenario, users, surrogate, chosen)
    result = waterfill_bs([Stream(*x) for x in zip(u, s1, s2)], budget)
    beams, offset = {}, 0
    for k in users:
        d = scenario.streams[k]
        p = result.powers[offset:offset + d]
        offset += d
        beams[k] = (chosen[k][0] * np.sqrt(p), p)
    return beams, result.lam


def _full_sweep(scenario: Scenario, beams: BeamformerSet, surrogate: Surrogate) -> BeamformerSet:
    g, lambdas = list(beams.beams), list(beams.lambdas) or [0.0] * scenario.n_cells
    for c in range(scenario.n_cells):
        users = scenario.users_of(c)
        if not users:
            continue
        cell_beams, lambdas[c] = _allocate(scenario, users, scenario.power[c], surrogate)
        for k, (gk, _) in cell_beams.items():
            g[k] = gk
    return make_beams(g, lambdas=lambdas)


def _aligned(target: np.ndarray, start: np.ndarray) -> np.ndarray:
    """target G right-rotated onto start (orthogonal Procrustes); G G^H is unchanged."""
    u, _, vh = np.linalg.svd(target.conj().T @ start)
    return target @ (u @ vh)


def _damped_step(beams: BeamformerSet, candidate: BeamformerSet, objective: Callable[[BeamformerSet], float],
                 current: float) -> Optional[Tuple[BeamformerSet, float]]:
    """Halving steps from the expansion point toward the surrogate maximizer.
    Budgets hold along the segment since per-BS power is convex in G."""
    target = [_aligned(x, g) for x, g in zip(candidate.beams, beams.beams)]
    t = 0.5
    for _ in range(DAMPING_STEPS):
        trial = make_beams([(1.0 - t) * g + t * x for g, x in zip(beams.beams, target)], lambdas=candidate.lambdas)
        value = objective(trial)
        if value > current:
            return trial, value
        t *= 0.5
    return None


def _within_budget(scenario: Scenario, beams: Sequence[np.ndarray], lambdas: Sequence[float]) -> BeamformerSet:
    trial = make_beams(beams, lambdas=lambdas)
    used = bs_powers(scenario, trial)
    scale = np.sqrt(np.minimum(1.0, np.asarray(scenario.power) / np.where(used > 0, used, 1.0)))
    return make_beams([g * scale[scenario.serving[k]] for k, g in enumerate(trial.beams)], lambdas=lambdas)


def _gradient_step(scenario: Scenario, beams: BeamformerSet, surrogate: Surrogate,
                   objective: Callable[[BeamformerSet], float], current: float) -> Optional[Tuple[BeamformerSet, float]]:
    """Backtracking ascent along the multiplier-corrected gradient, pulled back onto the budgets."""
    grads, lambdas = _stationarity(scenario, beams, surrogate)
    directions = [grads[k] - lambdas[scenario.serving[k]] * g for k, g in enumerate(beams.beams)]
    if not any(np.any(d) for d in directions):
        return None
    curvature = max(
        scenario.weights[k] * np.linalg.norm(surrogate.own[k], 2) + np.linalg.norm(surrogate.a[k], 2)
        + lambdas[scenario.serving[k]]
        for k in range(scenario.n_users)
    )
    t = 1.0 / max(curvature, np.finfo(float).tiny)
    for _ in range(GRADIENT_STEPS):
        trial = _within_budget(scenario, [g + t * d for g, d in zip(beams.beams, directions)], lambdas)
        value = objective(trial)
        if value > current:
            return trial, value
        t *= 0.5
    return None


def _minorize(state: OptimizerState, scenario: Scenario, objective: Callable[[BeamformerSet], float],
              surrogate_at: Callable[[BeamformerSet], Surrogate]) -> OptimizerState:
    """Surrogate maximization over all users at once. A candidate that lowers the
    true objective is replaced by a damped step toward it, then by a gradient
    step; when neither ascends, the beams stay put and the update is "none"."""
    current = state.objective_history[-1] if state.objective_history else objective(state.beams)
    surrogate = surrogate_at(state.beams)
    candidate = _full_sweep(scenario, state.beams, surrogate)
    value = objective(candidate)
    update: Update = "full"
    if value < current - ASCENT_SLACK * (1.0 + abs(current)):
        logger.debug("iteration %d: joint update lowered the objective (%.10g -> %.10g)",
                     state.iteration + 1, current, value)
        fallback = _damped_step(state.beams, candidate, objective, current)
        update = "damped"
        if fallback is None:
            fallback = _gradient_step(scenario, state.beams, surrogate, objective, current)
            update = "gradient"
        if fallback is None:
            candidate, value, update = state.beams, current, "none"
        else:
            candidate, value = fallback
    return replace(
        state,
        beams=candidate,
        expansion=candidate.covariances,
        iteration=state.iteration + 1,
        objective_history=state.objective_history + (value,),
        update=update,
    )


def minorize_step_icsit(state: OptimizerState, scenario: Scenario, h: ChannelRealization) -> OptimizerState:
    return _minorize(
        state, scenario,
        objective=lambda b: wsr(scenario, h, b),
        surrogate_at=lambda b: surrogate_matrices_icsit(scenario, h, b),
    )


def minorize_step_pwcsit(state: OptimizerState, scenario: Scenario) -> OptimizerState:
    return _minorize(
        state, scenario,
        objective=lambda b: massive_ewsr(scenario, b),
        surrogate_at=lambda b: surrogate_matrices_pwcsit(scenario, b),
    )


# --- WEIGHTED SUM MSE ---

def _wsmse_cell_beams(scenario: Scenario, h: ChannelRealization, c: int, receivers, weights):
    """Tx filters of cell c: (M + lam I)^-1 H^H F W u with lam set by bisection on the budget."""
    nt = scenario.nt[c]
    m = np.zeros((nt, nt), dtype=complex)
    for i in range(scenario.n_users):
        hf = h[i, c].conj().T @ receivers[i]
        m += scenario.weights[i] * hf @ weights[i] @ hf.conj().T
    values, vectors = scipy.linalg.eigh(hermitize(m))
    values = np.clip(values, 0.0, None)
    users = scenario.users_of(c)
    rhs = {k: vectors.conj().T @ (h[k, c].conj().T @ receivers[k] @ weights[k]) * scenario.weights[k] for k in users}
    energy = sum(np.sum(np.abs(y) ** 2, axis=1) for y in rhs.values())
    budget = scenario.power[c]

    def total(lam: float) -> float:
        level = values + lam
        live = energy > 0
        if np.any(level[live] <= 0):
            return np.inf
        return float(np.sum(energy[live] / level[live] ** 2))

    null = values <= 1e-12 * max(values.max(initial=0.0), np.finfo(float).tiny)
    lam = 0.0
    if np.any(energy[null] > 1e-20 * max(energy.sum(), np.finfo(float).tiny)) or total(0.0) > budget:
        lo, hi = 0.0, 1.0
        while total(hi) > budget:
            lo, hi = hi, 2.0 * hi
            if not np.isfinite(hi):
                raise NumericFailure("WSMSE multiplier bracket diverged", details={"bs": c})
        for _ in range(BISECTION_MAX_ITER):
            lam = 0.5 * (lo + hi)
            t = total(lam)
            if abs(t - budget) <= BISECTION_RTOL * budget:
                break
            if t > budget:
                lo = lam
            else:
                hi = lam
        else:
            raise NumericFailure("WSMSE multiplier bisection did not converge", details={"bs": c})

    level = values + lam
    scale = np.where(level > 0, 1.0 / np.where(level > 0, level, 1.0), 0.0)
    return {k: vectors @ (scale[:, None] * y) for k, y in rhs.items()}, lam


def wsmse_step(state: OptimizerState, scenario: Scenario, h: ChannelRealization) -> OptimizerState:
    """Receivers, then weights, then Tx filters (with per-BS multipliers)."""
    beams = state.beams
    covs = rx_covariances(scenario, h, beams)
    receivers = tuple(mmse_rx(scenario, h, beams, k, covs=covs) for k in range(scenario.n_users))
    weights = []
    for k in range(scenario.n_users):
        e = mse_matrix(scenario, h, beams, k, receivers[k])
        if not np.all(np.isfinite(e)):
            raise NumericFailure("non-finite MSE", details={"user": k})
        weights.append(hermitize(scipy.linalg.inv(e)))
    weights = tuple(weights)

    new_beams, lambdas = [None] * scenario.n_users, [0.0] * scenario.n_cells
    for c in range(scenario.n_cells):
        if not scenario.users_of(c):
            continue
        cell_beams, lambdas[c] = _wsmse_cell_beams(scenario, h, c, receivers, weights)
        for k, g in cell_beams.items():
            new_beams[k] = g
    candidate = make_beams(new_beams, lambdas=lambdas)
    return replace(
        state,
        beams=candidate,
        receivers=receivers,
        weights=weights,
        iteration=state.iteration + 1,
        objective_history=state.objective_history + (wsr(scenario, h, candidate),),
    )


# --- STATIONARITY ---

def _stationarity(scenario: Scenario, beams: BeamformerSet, surrogate: Surrogate) -> Tuple[List[np.ndarray], List[float]]:
    """Objective gradients (u_k C_k - A_k) G_k and the per-BS multipliers that best absorb them.

    A BS below its budget gets lambda = 0; at the budget, lambda is the
    least-squares fit of the cell's gradients onto its beams, floored at 0.
    """
    grads = [scenario.weights[k] * (surrogate.own[k] @ g) - surrogate.a[k] @ g for k, g in enumerate(beams.beams)]
    used = bs_powers(scenario, beams)
    lambdas = []
    for c in range(scenario.n_cells):
        users = scenario.users_of(c)
        lam = 0.0
        if users and used[c] >= scenario.power[c] * (1.0 - BUDGET_SLACK):
            push = sum(np.vdot(beams.beams[k], grads[k]).real for k in users)
            lam = max(push / used[c], 0.0)
        lambdas.append(lam)
    return grads, lambdas


def kkt_residual(scenario: Scenario, beams: BeamformerSet, h: Optional[ChannelRealization] = None) -> float:
    """max_k ||(u_k C_k - A_k - lam_{b_k} I) G_k||_F / sqrt(P_{b_k}).

    u_k C_k G_k is the exact gradient of user k's own term: H^H R_k^-1 H G_k
    with a realization h, Ht diag(Hr^H R_k^-1 Hr) D^2 Ht^H G_k with pathwise
    parameters only. Normalizing by the budget keeps beams that fade toward
    zero from dominating.
    """
    surrogate = surrogate_matrices_icsit(scenario, h, beams) if h is not None \
        else surrogate_matrices_pwcsit(scenario, beams)
    grads, lambdas = _stationarity(scenario, beams, surrogate)
    worst = 0.0
    for k, g in enumerate(beams.beams):
        bs = scenario.serving[k]
        worst = max(worst, float(np.linalg.norm(grads[k] - lambdas[bs] * g) / np.sqrt(scenario.power[bs])))
    return worst


# --- DRIVER ---

def optimize(algo: Algorithm, scenario: Scenario, h: Optional[ChannelRealization] = None,
             init: Union[str, BeamformerSet] = "matched", tol: float = 1e-8, max_iter: int = 200,
             rng: Optional[np.random.Generator] = None, kkt_tol: float = KKT_TOL) -> OptimizeResult:
    """Iterates one design until the objective change stays within tol*(1+|objective|)
    for CONVERGED_STREAK consecutive accepted updates and the KKT residual is
    at most kkt_tol, or max_iter is reached. An iteration that finds no ascent
    step ends the run, converged only if the beams already meet kkt_tol."""
    if algo not in ALGORITHMS:
        raise ValidationException(f"unknown algorithm '{algo}'", details={"choices": list(ALGORITHMS)})
    if algo in PERFECT_CSIT and h is None:
        raise ValidationException(f"{algo} needs a channel realization")
    if algo not in PERFECT_CSIT and h is not None:
        raise ValidationException(f"{algo} works from pathwise parameters only; drop the realization")

    beams = init if isinstance(init, BeamformerSet) else init_beamformers(scenario, init, rng=rng, h=h)
    check_beams(scenario, beams)
    if all(not np.any(g) for g in beams.beams):
        raise ValidationException("all-zero initial beamformers are a trivial stationary point")
    if not beams.lambdas:
        beams = replace(beams, lambdas=(0.0,) * scenario.n_cells)

    if algo == "wsmse":
        objective = lambda b: wsr(scenario, h, b)
        step = lambda s: wsmse_step(s, scenario, h)
    elif algo == "minorize_icsit":
        objective = lambda b: wsr(scenario, h, b)
        step = lambda s: minorize_step_icsit(s, scenario, h)
    else:
        objective = lambda b: massive_ewsr(scenario, b)
        step = lambda s: minorize_step_pwcsit(s, scenario)

    state = OptimizerState(beams=beams, expansion=beams.covariances, objective_history=(objective(beams),))
    streak, converged = 0, False
    while state.iteration < max_iter:
        state = step(state)
        if state.update == "none":
            logger.warning("%s found no ascent step at iteration %d", algo, state.iteration)
            break
        previous, value = state.objective_history[-2], state.objective_history[-1]
        logger.debug("%s iteration %d (%s): objective %.12g", algo, state.iteration, state.update, value)
        streak = streak + 1 if abs(value - previous) <= tol * (1.0 + abs(value)) else 0
        if streak >= CONVERGED_STREAK and \
                kkt_residual(scenario, state.beams, h if algo in PERFECT_CSIT else None) <= kkt_tol:
            converged = True
            break
    else:
        logger.warning("%s stopped at max_iter=%d without converging", algo, max_iter)

    residual = kkt_residual(scenario, state.beams, h if algo in PERFECT_CSIT else None)
    if state.update == "none":
        converged = residual <= kkt_tol
    return OptimizeResult(
        beams=state.beams,
        objective=state.objective_history[-1],
        iterations=state.iteration,
        kkt_residual=residual,
        converged=converged,
        objective_history=state.objective_history,
    )
