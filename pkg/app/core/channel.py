"""Pathwise geometric channel model.

A BS -> user link is a sum of L specular paths,
    H = sum_i A_i exp(j psi_i) h_r(phi_i) h_t(theta_i)^H = Hr Psi D Ht^H,
where the amplitudes and angles are slow-fading parameters and the phases
psi_i are i.i.d. uniform on [0, 2 pi) per draw.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from app.core.exceptions import ValidationException
from app.core.numkern import hermitize

logger = logging.getLogger(__name__)

Side = Literal["tx", "rx"]


@dataclass(frozen=True, eq=False)
class PathwiseLink:
    amplitudes: np.ndarray  # (L,)
    aod: np.ndarray         # (L,) radians
    aoa: np.ndarray         # (L,) radians
    ht: np.ndarray          # (Nt, L), unit-norm columns
    hr: np.ndarray          # (Nr, L), columns of squared norm Nr

    @property
    def n_paths(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def nt(self) -> int:
        return self.ht.shape[0]

    @property
    def nr(self) -> int:
        return self.hr.shape[0]

    @property
    def d(self) -> np.ndarray:
        return np.diag(self.amplitudes)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Multi-cell system: users, serving map, antennas, budgets, weights and all links.

    links[k][j] is the link from BS j to user k.
    """
    n_cells: int
    serving: Tuple[int, ...]
    nt: Tuple[int, ...]
    nr: Tuple[int, ...]
    power: Tuple[float, ...]
    weights: Tuple[float, ...]
    links: Tuple[Tuple[PathwiseLink, ...], ...]
    streams: Tuple[int, ...]

    def __post_init__(self):
        k = len(self.serving)
        if self.n_cells < 1 or k < 1:
            raise ValidationException("scenario needs at least one cell and one user")
        if len(self.nt) != self.n_cells or len(self.power) != self.n_cells:
            raise ValidationException("per-BS fields must have one entry per cell")
        if len(self.nr) != k or len(self.weights) != k or len(self.streams) != k or len(self.links) != k:
            raise ValidationException("per-user fields must have one entry per user")
        if any(not 0 <= b < self.n_cells for b in self.serving):
            raise ValidationException("every user needs a valid serving BS", details={"serving": self.serving})
        if any(w <= 0 for w in self.weights):
            raise ValidationException("rate weights must be positive")
        if any(p <= 0 for p in self.power):
            raise ValidationException("power budgets must be positive")
        for user in range(k):
            if len(self.links[user]) != self.n_cells:
                raise ValidationException("each user needs one link per BS", details={"user": user})
            if not 1 <= self.streams[user] <= self.nt[self.serving[user]]:
                raise ValidationException("stream count out of range", details={"user": user})
            for bs, link in enumerate(self.links[user]):
                if link.nt != self.nt[bs] or link.nr != self.nr[user]:
                    raise ValidationException(
                        "link dimensions disagree with antenna counts",
                        details={"user": user, "bs": bs, "shape": (link.nr, link.nt)},
                    )

    @property
    def n_users(self) -> int:
        return len(self.serving)

    def users_of(self, bs: int) -> Tuple[int, ...]:
        return tuple(k for k, b in enumerate(self.serving) if b == bs)

    def link(self, k: int, j: int) -> PathwiseLink:
        return self.links[k][j]

    def with_power(self, power) -> "Scenario":
        """Same geometry with new per-BS budgets (scalar or one per BS)."""
        if np.isscalar(power):
            power = (float(power),) * self.n_cells
        return dataclasses.replace(self, power=tuple(float(p) for p in power))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: Tuple[Tuple[np.ndarray, ...], ...]  # h[k][j]: Nr_k x Nt_j

    def __getitem__(self, key: Tuple[int, int]) -> np.ndarray:
        k, j = key
        return self.h[k][j]


def steering_vector(angle: float, n: int, side: Side) -> np.ndarray:
    """Half-wavelength ULA response; unit norm on the tx side, unit-modulus entries on the rx side."""
    if n < 1:
        raise ValidationException("antenna count must be positive", details={"N": n})
    response = np.exp(1j * np.pi * np.arange(n) * np.sin(angle))
    if side == "tx":
        return response / np.sqrt(n)
    if side == "rx":
        return response
    raise ValidationException(f"unknown array side '{side}'")


def make_link(amplitudes, aod, aoa, nt: int, nr: int) -> PathwiseLink:
    amplitudes = np.asarray(amplitudes, dtype=float).reshape(-1)
    aod = np.asarray(aod, dtype=float).reshape(-1)
    aoa = np.asarray(aoa, dtype=float).reshape(-1)
    if not (amplitudes.shape == aod.shape == aoa.shape):
        raise ValidationException(
            "path parameter lists differ in length",
            details={"amplitudes": amplitudes.size, "aod": aod.size, "aoa": aoa.size},
        )
    if amplitudes.size == 0 or np.any(amplitudes <= 0):
        raise ValidationException("path amplitudes must be positive")
    ht = np.stack([steering_vector(t, nt, "tx") for t in aod], axis=1)
    hr = np.stack([steering_vector(p, nr, "rx") for p in aoa], axis=1)
    return PathwiseLink(amplitudes=amplitudes, aod=aod, aoa=aoa, ht=ht, hr=hr)


def sample_pathwise(link: PathwiseLink, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """One draw of H = Hr diag(exp(j psi)) D Ht^H, or a (size, Nr, Nt) batch of draws."""
    shape = (link.n_paths,) if size is None else (size, link.n_paths)
    psi = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    gains = np.exp(1j * psi) * link.amplitudes
    if size is None:
        return (link.hr * gains) @ link.ht.conj().T
    return np.einsum("rl,tl,nl->nrt", link.hr, link.ht.conj(), gains)


def sample_realization(scenario: Scenario, rng: np.random.Generator) -> ChannelRealization:
    """Independent phases for every link, drawn in (user, BS) order."""
    h = tuple(
        tuple(sample_pathwise(scenario.link(k, j), rng) for j in range(scenario.n_cells))
        for k in range(scenario.n_users)
    )
    return ChannelRealization(h=h)


def pathwise_expected_gram(link: PathwiseLink, q: np.ndarray) -> np.ndarray:
    """E_psi[H Q H^H] = Hr D diag(Ht^H Q Ht) D Hr^H."""
    path_power = np.einsum("tl,ts,sl->l", link.ht.conj(), q, link.ht).real
    return hermitize((link.hr * (link.amplitudes ** 2 * path_power)) @ link.hr.conj().T)


def _draw_link(rng: np.random.Generator, n_paths: int, nt: int, nr: int, gain: float) -> PathwiseLink:
    amplitudes = rng.uniform(0.5, 1.5, size=n_paths)
    amplitudes = gain * amplitudes / np.sqrt(np.sum(amplitudes ** 2))
    aod = rng.uniform(-np.pi / 2, np.pi / 2, size=n_paths)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=n_paths)
    return make_link(amplitudes, aod, aoa, nt, nr)


def random_scenario(
    n_cells: int,
    users_per_cell: int,
    n_paths: int,
    nt: int,
    nr: int,
    power: float,
    rng: np.random.Generator,
    streams: int = 1,
    intercell_gain: float = 1.0,
) -> Scenario:
    """Draws slow-fading geometry for every link; users are numbered cell by cell.

    Per-link amplitudes are normalized to sum_i A_i^2 = 1 (times intercell_gain^2
    on links from a non-serving BS).
    """
    if min(n_cells, users_per_cell, n_paths, nt, nr, streams) < 1:
        raise ValidationException("scenario counts must be positive")
    serving = tuple(c for c in range(n_cells) for _ in range(users_per_cell))
    links = tuple(
        tuple(
            _draw_link(rng, n_paths, nt, nr, 1.0 if j == b else intercell_gain)
            for j in range(n_cells)
        )
        for b in serving
    )
    return Scenario(
        n_cells=n_cells,
        serving=serving,
        nt=(nt,) * n_cells,
        nr=(nr,) * len(serving),
        power=(float(power),) * n_cells,
        weights=(1.0,) * len(serving),
        links=links,
        streams=(streams,) * len(serving),
    )


def gaussian_expected_gram(hbar, chh, g) -> np.ndarray:
    """E[H g g^H H^H] for vec(H^T) ~ CN(vec(hbar^T), chh).

    vec(H^T) stacks the rows of H, so (I_Nr kron g^T) vec(H^T) = H g.
    """
    hbar = np.asarray(hbar, dtype=complex)
    chh = np.asarray(chh, dtype=complex)
    g = np.asarray(g, dtype=complex).reshape(-1)
    if hbar.ndim != 2 or hbar.shape[1] != g.size:
        raise ValidationException("channel mean and beamformer disagree", details={"H": hbar.shape, "g": g.size})
    nr, nt = hbar.shape
    if chh.shape != (nr * nt, nr * nt):
        raise ValidationException("covariance size must be Nr*Nt", details={"C": chh.shape, "Nr*Nt": nr * nt})
    mixer = np.kron(np.eye(nr), g[None, :])
    hg = hbar @ g
    return hermitize(np.outer(hg, hg.conj()) + mixer @ chh @ mixer.conj().T)


def sample_gaussian_channel(hbar, chh, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draws H with vec(H^T) ~ CN(vec(hbar^T), chh); chh may be singular."""
    hbar = np.asarray(hbar, dtype=complex)
    nr, nt = hbar.shape
    values, vectors = np.linalg.eigh(hermitize(np.asarray(chh, dtype=complex)))
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    count = 1 if size is None else size
    z = (rng.standard_normal((count, nr * nt)) + 1j * rng.standard_normal((count, nr * nt))) / np.sqrt(2.0)
    h = hbar.reshape(-1)[None, :] + z @ root.T
    h = h.reshape(count, nr, nt)
    return h[0] if size is None else h
