"""Receive covariances, MMSE receivers and (expected) weighted sum rates.

Rates are in nats. With unit-variance noise at every user,
    R_k    = I + sum_i H_{k,b_i} Q_i H_{k,b_i}^H
    Rbar_k = R_k - H_{k,b_k} Q_k H_{k,b_k}^H
and user k's rate is ln det(I + G_k^H H^H Rbar_k^-1 H G_k) = ln det R_k - ln det Rbar_k.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.core.channel import ChannelRealization, Scenario, pathwise_expected_gram, sample_pathwise
from app.core.exceptions import NumericFailure, ValidationException
from app.core.numkern import hermitize, logdet_pd

logger = logging.getLogger(__name__)

BUDGET_SLACK = 1e-6
MC_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    beams: Tuple[np.ndarray, ...]     # G_k: Nt_{b_k} x d_k
    powers: Tuple[np.ndarray, ...]    # diagonal of P_k
    lambdas: Tuple[float, ...]        # per-BS multipliers

    @property
    def covariances(self) -> Tuple[np.ndarray, ...]:
        return tuple(g @ g.conj().T for g in self.beams)


@dataclass(frozen=True, eq=False)
class CovariancePair:
    r: Tuple[np.ndarray, ...]
    rbar: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class EwsrEstimate:
    mean: float
    stderr: float


def make_beams(beams: Sequence[np.ndarray], lambdas: Optional[Sequence[float]] = None, n_cells: Optional[int] = None) -> BeamformerSet:
    """Wraps raw beamformers; stream powers are the squared column norms."""
    beams = tuple(np.atleast_2d(np.asarray(g, dtype=complex).T).T for g in beams)
    powers = tuple(np.sum(np.abs(g) ** 2, axis=0) for g in beams)
    if lambdas is None:
        lambdas = (0.0,) * (n_cells if n_cells is not None else 0)
    return BeamformerSet(beams=beams, powers=powers, lambdas=tuple(float(x) for x in lambdas))


def bs_powers(scenario: Scenario, beams: BeamformerSet) -> np.ndarray:
    used = np.zeros(scenario.n_cells)
    for k, g in enumerate(beams.beams):
        used[scenario.serving[k]] += float(np.sum(np.abs(g) ** 2))
    return used


def check_beams(scenario: Scenario, beams: BeamformerSet) -> None:
    """Dimension and power-budget validation of a beamformer set."""
    if len(beams.beams) != scenario.n_users:
        raise ValidationException("one beamformer per user expected", details={"got": len(beams.beams)})
    for k, g in enumerate(beams.beams):
        nt = scenario.nt[scenario.serving[k]]
        if g.ndim != 2 or g.shape[0] != nt or g.shape[1] < 1:
            raise ValidationException("beamformer shape mismatch", details={"user": k, "shape": g.shape, "Nt": nt})
    used = bs_powers(scenario, beams)
    budget = np.asarray(scenario.power)
    over = used > budget * (1.0 + BUDGET_SLACK)
    if np.any(over):
        raise ValidationException(
            "power budget exceeded",
            details={"bs": int(np.argmax(over)), "used": used.tolist(), "budget": budget.tolist()},
        )


def _check_realization(scenario: Scenario, h: ChannelRealization) -> None:
    for k in range(scenario.n_users):
        for j in range(scenario.n_cells):
            if h[k, j].shape != (scenario.nr[k], scenario.nt[j]):
                raise ValidationException(
                    "channel realization does not match the scenario",
                    details={"user": k, "bs": j, "shape": h[k, j].shape},
                )


def _covariances_from_grams(scenario: Scenario, gram) -> CovariancePair:
    """gram(k, i) gives user i's received covariance at user k."""
    r, rbar = [], []
    for k in range(scenario.n_users):
        total = np.eye(scenario.nr[k], dtype=complex)
        own = None
        for i in range(scenario.n_users):
            contribution = gram(k, i)
            total = total + contribution
            if i == k:
                own = contribution
        r.append(hermitize(total))
        rbar.append(hermitize(total - own))
    return CovariancePair(r=tuple(r), rbar=tuple(rbar))


def rx_covariances(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet) -> CovariancePair:
    _check_realization(scenario, h)
    check_beams(scenario, beams)

    def gram(k, i):
        hg = h[k, scenario.serving[i]] @ beams.beams[i]
        return hg @ hg.conj().T

    return _covariances_from_grams(scenario, gram)


def mmse_rx(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet, k: int,
            covs: Optional[CovariancePair] = None) -> np.ndarray:
    """f_k = R_k^-1 H_{k,b_k} G_k."""
    covs = covs or rx_covariances(scenario, h, beams)
    try:
        return scipy.linalg.solve(covs.r[k], h[k, scenario.serving[k]] @ beams.beams[k], assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise NumericFailure(f"receive covariance of user {k} is singular: {e}")


def user_rates(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet,
               covs: Optional[CovariancePair] = None) -> np.ndarray:
    """Unweighted per-user rates ln det(I + G^H H^H Rbar^-1 H G)."""
    covs = covs or rx_covariances(scenario, h, beams)
    rates = np.zeros(scenario.n_users)
    for k in range(scenario.n_users):
        hg = h[k, scenario.serving[k]] @ beams.beams[k]
        whitened = scipy.linalg.solve(covs.rbar[k], hg, assume_a="pos")
        gain = hermitize(np.eye(hg.shape[1]) + hg.conj().T @ whitened)
        rates[k] = logdet_pd(gain)
    return rates


def wsr(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet) -> float:
    rates = user_rates(scenario, h, beams)
    value = float(np.dot(scenario.weights, rates))
    if not np.isfinite(value):
        raise NumericFailure("weighted sum rate is not finite")
    return value


def mse_matrix(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet, k: int, f: np.ndarray) -> np.ndarray:
    """MSE matrix of user k's streams for an arbitrary linear receiver f."""
    own = f.conj().T @ h[k, scenario.serving[k]] @ beams.beams[k]
    error = np.eye(own.shape[0]) - own
    e = error @ error.conj().T + f.conj().T @ f
    for i in range(scenario.n_users):
        if i == k:
            continue
        leak = f.conj().T @ h[k, scenario.serving[i]] @ beams.beams[i]
        e = e + leak @ leak.conj().T
    return hermitize(e)


def wsmse_cost(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet,
               receivers: Sequence[np.ndarray], weights: Sequence[np.ndarray],
               lambdas: Optional[Sequence[float]] = None) -> float:
    """sum_k u_k (tr(W_k E_k) - ln det W_k), plus the power terms when lambdas are given."""
    cost = 0.0
    for k in range(scenario.n_users):
        e = mse_matrix(scenario, h, beams, k, receivers[k])
        w = np.atleast_2d(weights[k])
        cost += scenario.weights[k] * (np.trace(w @ e).real - float(logdet_pd(w)))
    if lambdas is not None:
        used = bs_powers(scenario, beams)
        cost += float(np.dot(lambdas, used - np.asarray(scenario.power)))
    return cost


def wsr_given_receivers(scenario: Scenario, h: ChannelRealization, beams: BeamformerSet,
                        receivers: Sequence[np.ndarray]) -> float:
    """WSR when user k applies the fixed linear receiver F_k:
    sum_k u_k ln det(I + G^H H^H F (F^H Rbar F)^-1 F^H H G)."""
    covs = rx_covariances(scenario, h, beams)
    total = 0.0
    for k in range(scenario.n_users):
        f = receivers[k]
        fhg = f.conj().T @ h[k, scenario.serving[k]] @ beams.beams[k]
        noise = hermitize(f.conj().T @ covs.rbar[k] @ f)
        gain = hermitize(np.eye(fhg.shape[1]) + fhg.conj().T @ np.linalg.solve(noise, fhg))
        total += scenario.weights[k] * float(logdet_pd(gain))
    return total


def pathwise_rx_covariances(scenario: Scenario, beams: BeamformerSet) -> CovariancePair:
    """Phase-averaged covariances: every H Q H^H replaced by its pathwise expectation."""
    check_beams(scenario, beams)
    q = beams.covariances

    def gram(k, i):
        return pathwise_expected_gram(scenario.link(k, scenario.serving[i]), q[i])

    return _covariances_from_grams(scenario, gram)


def pathwise_user_rates(scenario: Scenario, beams: BeamformerSet,
                        covs: Optional[CovariancePair] = None) -> np.ndarray:
    covs = covs or pathwise_rx_covariances(scenario, beams)
    return np.array([float(logdet_pd(covs.r[k]) - logdet_pd(covs.rbar[k])) for k in range(scenario.n_users)])


def massive_ewsr(scenario: Scenario, beams: BeamformerSet) -> float:
    """Large-array limit of the expected WSR: the expectation moved inside ln det."""
    return float(np.dot(scenario.weights, pathwise_user_rates(scenario, beams)))


def _chunk_wsr(scenario: Scenario, beams: BeamformerSet, rng: np.random.Generator, n: int) -> np.ndarray:
    draws = [
        [sample_pathwise(scenario.link(k, j), rng, size=n) for j in range(scenario.n_cells)]
        for k in range(scenario.n_users)
    ]
    values = np.zeros(n)
    for k in range(scenario.n_users):
        total = np.broadcast_to(np.eye(scenario.nr[k], dtype=complex), (n, scenario.nr[k], scenario.nr[k])).copy()
        own = None
        for i in range(scenario.n_users):
            hg = draws[k][scenario.serving[i]] @ beams.beams[i]
            contribution = hg @ np.swapaxes(hg.conj(), -1, -2)
            total += contribution
            if i == k:
                own = contribution
        values += scenario.weights[k] * (logdet_pd(total) - logdet_pd(total - own))
    return values


def monte_carlo_ewsr(scenario: Scenario, beams: BeamformerSet, trials: int, seed: int) -> EwsrEstimate:
    """Sample mean and standard error of the WSR over independent phase draws.

    Trials run in chunks of MC_CHUNK, chunk c drawing from default_rng([seed, c]),
    so the first trial uses the same phases as sample_realization(default_rng([seed, 0])).
    """
    if trials < 1:
        raise ValidationException("at least one Monte-Carlo trial is required", details={"trials": trials})
    check_beams(scenario, beams)
    chunks = []
    for c, start in enumerate(range(0, trials, MC_CHUNK)):
        n = min(MC_CHUNK, trials - start)
        chunks.append(_chunk_wsr(scenario, beams, np.random.default_rng([seed, c]), n))
    values = np.concatenate(chunks)
    if not np.all(np.isfinite(values)):
        raise NumericFailure("non-finite rate in Monte-Carlo evaluation")
    stderr = float(np.std(values, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    logger.debug("monte-carlo ewsr: %d trials, mean %.6g, stderr %.3g", trials, values.mean(), stderr)
    return EwsrEstimate(mean=float(values.mean()), stderr=stderr)
