"""Open-set decision criteria.

Two families: thresholding the maximum softmax/sigmoid probability, and
logit recalibration backed by per-class Weibull tail models (mean
activation vector per class, Weibull fit over the tail of the training
distances to it, top-ranked logits penalized by the resulting outlier
weight, and a synthesized unknown-class logit).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .classifier import predict_topm, sigmoid, softmax

KAPPA_CAP = 1e6


@dataclass
class WeibullTailModel:
    class_id: int
    mav: np.ndarray
    kappa: float
    sigma: float
    tau: int

    def __post_init__(self):
        self.mav = np.asarray(self.mav, dtype=float)
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError("kappa must be finite and positive")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be finite and positive")


@dataclass
class OpenMaxConfig:
    alpha: int
    delta: float
    tau: int

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")


@dataclass
class OpenSetDecision:
    y_o: int                    # 1 = "an unknown class is present"
    y_w: np.ndarray = None      # recalibrated outputs (OpenMax paths only)
    p_u: float = None           # unknown-class probability (OpenMax only)

    def __post_init__(self):
        if self.y_o not in (0, 1):
            raise ValueError("y_o must be 0 or 1")
        if self.p_u is not None and not 0.0 <= self.p_u <= 1.0:
            raise ValueError("p_u must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Calibration: MAVs and Weibull tails


def fit_mav(vectors):
    """Arithmetic mean of the qualifying activation vectors of one class."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("need a non-empty (k, N) activation block")
    return vectors.mean(axis=0)


def select_multiclass_activations(logits, labels):
    """Per-class activation blocks from correctly classified examples."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    correct = logits.argmax(axis=1) == labels
    out = {}
    for c in np.unique(labels):
        mask = correct & (labels == c)
        out[int(c)] = logits[mask]
    return out


def select_multilabel_activations(logits, label_index_sets, polyphony):
    """Per-class blocks where the class is a true positive and also
    appears in the oracle top-m prediction (experimental multi-label
    membership rule)."""
    logits = np.asarray(logits, dtype=float)
    out = {}
    for v, labels, m in zip(logits, label_index_sets, polyphony):
        top = predict_topm(v, int(m))
        for c in labels:
            if c in top:
                out.setdefault(int(c), []).append(v)
    return {c: np.asarray(rows) for c, rows in out.items()}


def fit_weibull_tail(distances, tau):
    """Two-parameter Weibull ML fit on the tau largest distances.

    Newton iteration on the shape parameter of the profile likelihood
    (tolerance 1e-9, at most 200 steps), then the closed-form scale.  A
    degenerate tail (all values equal) returns the limit fit
    (kappa = KAPPA_CAP, sigma = the common value) with a warning.
    """
    distances = np.asarray(distances, dtype=float)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if distances.shape[0] < tau:
        raise ValueError(f"need at least tau={tau} distances, got {distances.shape[0]}")
    tail = np.sort(distances)[-tau:]
    if tail[0] <= 0:
        raise ValueError("tail values must be strictly positive")

    scale0 = tail.max()
    x = tail / scale0           # conditioning: x in (0, 1]
    ln_x = np.log(x)
    sd = ln_x.std()
    if sd < 1e-12:
        warnings.warn("degenerate Weibull tail (all values equal); returning limit fit")
        return KAPPA_CAP, float(tail[0])

    mean_ln = ln_x.mean()
    k = 1.28255 / sd            # extreme-value moment estimate as the Newton start
    for _ in range(200):
        x_k = x ** k
        s0 = x_k.sum()
        s1 = (x_k * ln_x).sum()
        s2 = (x_k * ln_x * ln_x).sum()
        f = s1 / s0 - 1.0 / k - mean_ln
        fp = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < 1e-9 * max(1.0, abs(k)):
            k = k_new
            break
        k = k_new
        if k > KAPPA_CAP:
            warnings.warn("Weibull shape hit the cap; tail is nearly degenerate")
            return KAPPA_CAP, float(tail.max())
    sigma = float(np.mean(x ** k) ** (1.0 / k) * scale0)
    return float(k), sigma


def weibull_cdf(d, kappa, sigma):
    """P(distance <= d) under Weibull(kappa, sigma); the outlier weight."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    out = 1.0 - np.exp(-((d / sigma) ** kappa))
    return float(out) if out.ndim == 0 else out


def fit_weibull_bank(class_activations, tau):
    """MAV plus Weibull tail model for every class.

    ``class_activations`` maps class id -> (k, N) activation block.
    Classes with fewer than tau qualifying examples are reported by id.
    """
    short = {c: len(rows) for c, rows in class_activations.items() if len(rows) < tau}
    if short:
        raise ValueError(
            f"classes with fewer than tau={tau} qualifying examples: {sorted(short)}"
        )
    bank = {}
    for c, rows in class_activations.items():
        mav = fit_mav(rows)
        distances = np.linalg.norm(rows - mav, axis=1)
        kappa, sigma = fit_weibull_tail(distances, tau)
        bank[int(c)] = WeibullTailModel(
            class_id=int(c), mav=mav, kappa=kappa, sigma=sigma, tau=int(tau)
        )
    return bank


# ---------------------------------------------------------------------------
# Decisions


def openmax_recalibrate(v, models, alpha):
    """Penalize the top-alpha ranked logits by their outlier weights.

    Rank r (1 = highest logit) of class j is scaled by
    1 - ((alpha - r + 1)/alpha) * w_j with w_j the Weibull CDF of the
    Euclidean distance between the logit vector and class j's MAV.  The
    shaved-off logit mass becomes the unknown logit v_0.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if alpha > n:
        raise ValueError("alpha cannot exceed the number of classes")
    missing = [j for j in range(n) if j not in models]
    if missing:
        raise ValueError(f"missing Weibull models for classes {missing}")
    order = np.argsort(-v, kind="stable")
    v_w = v.copy()
    v_0 = 0.0
    for r in range(1, alpha + 1):
        j = int(order[r - 1])
        model = models[j]
        d = float(np.linalg.norm(v - model.mav))
        w = weibull_cdf(d, model.kappa, model.sigma)
        penalty = ((alpha - r + 1) / alpha) * w
        v_w[j] = v[j] * (1.0 - penalty)
        v_0 += v[j] * penalty
    return v_w, float(v_0)


def decide_msp(y_hat, delta):
    """Unknown iff the maximum probability falls below delta."""
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.size == 0:
        raise ValueError("empty probability vector")
    return OpenSetDecision(y_o=int(y_hat.max() < delta))


def decide_msp_per_source(y_hat_list, delta):
    """Unknown iff any source's maximum probability falls below delta."""
    if len(y_hat_list) == 0:
        raise ValueError("empty source list")
    flag = any(decide_msp(y, delta).y_o for y in y_hat_list)
    return OpenSetDecision(y_o=int(flag))


def _openmax_single(v, models, config, squash):
    v_w, v_0 = openmax_recalibrate(v, models, config.alpha)
    if squash == "softmax":
        p = softmax(np.concatenate([v_w, [v_0]]))
        y_w, p_u = p[:-1], float(p[-1])
    elif squash == "sigmoid":
        y_w, p_u = sigmoid(v_w), float(sigmoid(np.array(v_0)))
    else:
        raise ValueError("squash must be 'softmax' or 'sigmoid'")
    top = float(y_w.max())
    y_o = int(top < config.delta or p_u >= top)
    return OpenSetDecision(y_o=y_o, y_w=y_w, p_u=p_u)


def decide_openmax(v, models, config, squash="softmax"):
    """OpenMax decision for one logit vector or a list of per-source ones.

    Multi-class paths squash the recalibrated N+1 vector with a softmax;
    the no-separation multi-label path uses sigmoid on v_w and v_0
    (``squash='sigmoid'``; experimental).  A clip is unknown when the
    recalibrated confidence drops below delta or the unknown probability
    reaches the top -- OR-ed over sources for per-source input.
    """
    if config is None or not models:
        raise ValueError("fitted models and a config are required")
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return _openmax_single(v, models, config, squash)
    decisions = [_openmax_single(row, models, config, squash) for row in v]
    return OpenSetDecision(
        y_o=int(any(d.y_o for d in decisions)),
        y_w=np.stack([d.y_w for d in decisions]),
        p_u=max(d.p_u for d in decisions),
    )
