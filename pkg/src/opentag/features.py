"""Feature-space stand-in for the audio front end.

Instead of rendering audio and embedding it, every class gets a fixed
unit-norm prototype vector; events become jittered copies of their
prototype, clips become energy-weighted mixtures, and a parameterized
corruption model produces the fixed set of eight "source estimates" a
separation front end would emit (leakage between sources, additive
noise, and low-energy background-only channels).
"""

from dataclasses import dataclass

import numpy as np

N_ESTIMATES = 8
DEFAULT_ENERGY_RANGE = (0.5, 2.0)
DEFAULT_ESTIMATE_FLOOR = 0.8


@dataclass
class PrototypeBank:
    """One unit-norm prototype per vocabulary class."""

    dim: int
    prototypes: np.ndarray      # (n_classes, dim)
    jitter_scale: float
    min_separation: float

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float)
        if self.prototypes.shape[1] != self.dim:
            raise ValueError("prototype width != dim")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("prototypes must be unit-norm")
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be nonnegative")

    @property
    def n_classes(self):
        return self.prototypes.shape[0]

    def pairwise_min_separation(self):
        """Smallest 1 - cos(v_i, v_j) over distinct prototype pairs."""
        cos = self.prototypes @ self.prototypes.T
        np.fill_diagonal(cos, -np.inf)
        return float(1.0 - cos.max())


@dataclass
class SourceFeature:
    vector: np.ndarray
    energy: float
    class_id: int = -1          # -1 for estimates with no known identity

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float)
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("non-finite feature vector")
        if self.energy <= 0:
            raise ValueError("energy must be positive")


@dataclass
class EstimateSet:
    """Fixed block of eight source estimates (vectors plus energies)."""

    vectors: np.ndarray         # (8, dim)
    energies: np.ndarray        # (8,)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if self.vectors.shape[0] != N_ESTIMATES or self.energies.shape[0] != N_ESTIMATES:
            raise ValueError(f"an estimate set holds exactly {N_ESTIMATES} channels")
        if np.any(self.energies <= 0):
            raise ValueError("estimate energies must be positive")


def init_prototypes(n_classes, dim, min_separation, rng_seed,
                    jitter_scale=0.1, max_rejections=200_000):
    """Rejection-sample unit Gaussians until all pairs are separated.

    Separation between two prototypes is 1 - cosine; every accepted pair
    must satisfy separation >= ``min_separation`` (so e.g. 0.5 enforces
    pairwise cosine <= 0.5).  Fails with a clear message if the floor
    looks infeasible for the requested count and dimension.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if not 0 <= min_separation < 2:
        raise ValueError("min_separation must lie in [0, 2)")
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 0)))
    max_cos = 1.0 - min_separation
    accepted = np.zeros((0, dim))
    tries = 0
    while accepted.shape[0] < n_classes:
        tries += 1
        if tries > max_rejections:
            raise RuntimeError(
                f"could not place {n_classes} prototypes in {dim} dims with "
                f"min separation {min_separation} after {max_rejections} draws; "
                "the separation floor is likely infeasible"
            )
        cand = rng.standard_normal(dim)
        cand /= np.linalg.norm(cand)
        if accepted.shape[0] == 0 or np.max(accepted @ cand) <= max_cos:
            accepted = np.vstack([accepted, cand])
    return PrototypeBank(
        dim=dim,
        prototypes=accepted,
        jitter_scale=jitter_scale,
        min_separation=min_separation,
    )


def jitter_std(bank, event):
    """Jitter grows linearly with the event's augmentation strength.

    Both augmentations are normalized to [0, 1] over their sampling
    ranges; an unaugmented event keeps jitter_scale/3, a maximally
    pitched and stretched one gets the full jitter_scale.
    """
    pitch_mag = abs(event.pitch_shift) / 2.0
    stretch_mag = abs(event.time_stretch - 1.0) / 0.2
    return bank.jitter_scale * (1.0 + pitch_mag + stretch_mag) / 3.0


def render_source(event, bank, rng_seed, energy_range=DEFAULT_ENERGY_RANGE):
    """Feature vector for one event: prototype plus augmentation jitter.

    Energy is log-uniform over ``energy_range``.  Deterministic under
    ``rng_seed``.
    """
    if not 0 <= event.class_id < bank.n_classes:
        raise ValueError(f"class {event.class_id} not in prototype bank")
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 1)))
    std = jitter_std(bank, event)
    vector = bank.prototypes[event.class_id] + std * rng.standard_normal(bank.dim)
    lo, hi = energy_range
    energy = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return SourceFeature(vector=vector, energy=energy, class_id=event.class_id)


def mix(sources, noise_std, rng_seed):
    """Energy-weighted mean of the source vectors plus isotropic noise.

    The noise draw depends only on ``rng_seed``, so reordering the source
    list cannot change the mixture.
    """
    if not 1 <= len(sources) <= 4:
        raise ValueError("mix takes 1..4 sources")
    vectors = np.stack([s.vector for s in sources])
    energies = np.array([s.energy for s in sources])
    mixture = energies @ vectors / energies.sum()
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 2)))
    return mixture + noise_std * rng.standard_normal(vectors.shape[1])


def corrupt_estimates(oracle, beta, gamma, rng_seed,
                      floor_factor=DEFAULT_ESTIMATE_FLOOR):
    """Turn m oracle sources into 8 imperfect source estimates.

    Estimate i <= m leaks a beta fraction of the other sources into
    source i and adds Gaussian noise of std gamma; its energy is the
    oracle energy scaled by (1 - beta).  The remaining channels are pure
    noise whose energy sits below the weakest oracle energy times
    ``floor_factor`` -- with enough leakage these background channels can
    out-rank a weak real source and survive oracle pruning, which is the
    error-propagation failure mode this model emulates.
    """
    m = len(oracle)
    if not 1 <= m <= 4:
        raise ValueError("need 1..4 oracle sources")
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 3)))
    dim = oracle[0].vector.shape[0]
    vectors = np.stack([s.vector for s in oracle])
    energies = np.array([s.energy for s in oracle])
    total = vectors.sum(axis=0)

    out_vec = np.zeros((N_ESTIMATES, dim))
    out_energy = np.zeros(N_ESTIMATES)
    share = beta / max(1, m - 1)
    for i in range(m):
        leak = total - vectors[i]
        out_vec[i] = (1.0 - beta) * vectors[i] + share * leak + gamma * rng.standard_normal(dim)
        out_energy[i] = max((1.0 - beta) * energies[i], 1e-12)
    floor = floor_factor * energies.min()
    for i in range(m, N_ESTIMATES):
        out_vec[i] = gamma * rng.standard_normal(dim)
        out_energy[i] = max(floor * rng.uniform(0.1, 1.0), 1e-12)
    return EstimateSet(vectors=out_vec, energies=out_energy)


def prune_indices(energies, m):
    """Indices of the m highest-energy channels, ties to the lower index,
    ordered by descending energy."""
    energies = np.asarray(energies, dtype=float)
    if not 1 <= m <= len(energies):
        raise ValueError(f"m must be in 1..{len(energies)}")
    order = np.argsort(-energies, kind="stable")
    return tuple(int(i) for i in order[:m])


def oracle_prune(estimates, m):
    """Keep the m highest-energy estimates (the oracle knows m)."""
    idx = prune_indices(estimates.energies, m)
    return [
        SourceFeature(vector=estimates.vectors[i].copy(),
                      energy=float(estimates.energies[i]))
        for i in idx
    ]
