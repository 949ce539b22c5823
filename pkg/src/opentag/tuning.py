"""Budgeted random search over the open-set decision hyperparameters.

Random search stands in for a fancier sampler: with three cheap
parameters it is competitive, dependency-free, and the trial log keeps
the door open for smarter samplers later.  Draws are sequential from one
seeded generator, so a longer budget extends a shorter one with the same
seed (prefix property).
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class SearchSpace:
    """Bounds per parameter; a ``None`` range fixes that parameter.

    ``delta`` is continuous, ``tau`` and ``alpha`` are integer ranges
    (inclusive).  MSP-only searches set tau and alpha to None and sweep
    delta alone.
    """

    delta: tuple = (0.0, 1.0)
    tau: tuple = None
    alpha: tuple = None

    def __post_init__(self):
        for name, rng, lo_ok in (("delta", self.delta, 0.0), ("tau", self.tau, 1), ("alpha", self.alpha, 1)):
            if rng is None:
                continue
            lo, hi = rng
            if lo > hi:
                raise ValueError(f"{name} bounds out of order: {rng}")
            if lo < lo_ok:
                raise ValueError(f"{name} lower bound must be >= {lo_ok}")

    def sample(self, rng):
        params = {"delta": float(rng.uniform(self.delta[0], self.delta[1]))}
        params["tau"] = int(rng.integers(self.tau[0], self.tau[1] + 1)) if self.tau else None
        params["alpha"] = int(rng.integers(self.alpha[0], self.alpha[1] + 1)) if self.alpha else None
        return params

    def contains(self, params):
        if not self.delta[0] <= params["delta"] <= self.delta[1]:
            return False
        for name, rng in (("tau", self.tau), ("alpha", self.alpha)):
            val = params.get(name)
            if rng is None:
                if val is not None:
                    return False
            elif not rng[0] <= val <= rng[1]:
                return False
        return True


@dataclass
class TrialRecord:
    index: int
    params: dict
    objective: float            # None when the trial errored
    seed: int
    error: str = None

    def __post_init__(self):
        if self.objective is not None and not 0.0 <= self.objective <= 1.0:
            raise ValueError("objective must lie in [0, 1]")


def tune(objective, space, budget, rng_seed):
    """Evaluate ``budget`` random trials; return (best params, trial log).

    The winner is the highest objective, ties broken by the earliest
    trial.  A trial whose objective raises is recorded with its error
    message and skipped, never silently dropped.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 0)))
    trials = []
    best = None
    for i in range(budget):
        params = space.sample(rng)
        try:
            value = float(objective(params))
        except Exception as exc:  # noqa: BLE001 - any trial failure is loggable
            trials.append(TrialRecord(index=i, params=params, objective=None,
                                      seed=int(rng_seed), error=f"{type(exc).__name__}: {exc}"))
            continue
        record = TrialRecord(index=i, params=params, objective=value, seed=int(rng_seed))
        trials.append(record)
        if best is None or record.objective > best.objective:
            best = record
    if best is None:
        raise RuntimeError(f"all {budget} trials failed; see the trial log")
    return dict(best.params), trials


def write_trial_log(trials, path):
    """CSV log: trial, delta, tau, alpha, objective, seed (blank on failure)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "delta", "tau", "alpha", "objective", "seed"])
        for t in trials:
            writer.writerow([
                t.index,
                repr(t.params["delta"]),
                "" if t.params.get("tau") is None else t.params["tau"],
                "" if t.params.get("alpha") is None else t.params["alpha"],
                "" if t.objective is None else repr(t.objective),
                t.seed,
            ])
