"""Dense classification head and its three training regimes.

One small rectifier MLP serves every model flavor; the difference is the
loss wired to its logits:

* ``bce``  — multi-label training on multi-hot targets,
* ``ce``   — plain multi-class cross-entropy,
* ``pit``  — permutation-invariant cross-entropy: per-source logits are
  matched to the clip labels by the assignment that minimizes the total
  loss over all m! permutations (m capped at 4).

Gradients are hand-rolled reverse mode over the same primitives, so
everything stays numpy and checkable against finite differences.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

MAX_SOURCES = 4
LOSS_KINDS = ("bce", "ce", "pit")


class UnknownCombinationError(KeyError):
    """Raised when a label combination was never seen in training."""


@dataclass
class MlpParams:
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: bias size {b.shape[0]} != {w.shape[1]}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def n_inputs(self):
        return self.weights[0].shape[0]

    @property
    def n_outputs(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp_params(layer_sizes, rng_seed):
    """Uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0."""
    rng = np.random.default_rng(np.random.SeedSequence((int(rng_seed), 0)))
    weights, biases = [], []
    for d_in, d_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpParams(weights, biases)


def _forward_cached(params, x):
    """Forward pass keeping layer inputs for backprop. x is (B, d)."""
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def mlp_forward(params, x):
    """Logits for a single feature vector or a (B, d) batch.

    Hidden layers are rectified; the output layer is linear (sigmoid or
    softmax is applied by whichever decision rule consumes the logits).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.n_inputs:
        raise ValueError(f"input dim {x.shape[1]} != {params.n_inputs}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    out = _forward_cached(params, x)[-1]
    return out[0] if single else out


def _logsumexp(v, axis=-1, keepdims=False):
    vmax = np.max(v, axis=axis, keepdims=True)
    out = vmax + np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def sigmoid(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def bce_loss(v, y):
    """Binary cross-entropy on logits, summed over classes.

    Uses the stable form max(v,0) - v*y + log(1 + exp(-|v|)).
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    if v.shape != y.shape:
        raise ValueError("logits and targets must have the same shape")
    terms = np.maximum(v, 0.0) - v * y + np.log1p(np.exp(-np.abs(v)))
    return float(terms.sum())


def ce_loss(v, k):
    """Categorical cross-entropy of logits v against class index k."""
    v = np.asarray(v, dtype=float)
    k = int(k)
    if not 0 <= k < v.shape[-1]:
        raise ValueError(f"class index {k} out of range for {v.shape[-1]} logits")
    return float(_logsumexp(v) - v[k])


def pit_loss(per_source_logits, labels):
    """Permutation-invariant total cross-entropy.

    Evaluates sum_i ce(v[perm[i]], labels[i]) over all m! assignments of
    sources to label slots and returns ``(loss, perm)`` for the minimizer;
    ties go to the lexicographically smallest permutation.
    """
    v = np.asarray(per_source_logits, dtype=float)
    labels = [int(l) for l in labels]
    m = v.shape[0]
    if m != len(labels):
        raise ValueError("one label per source required")
    if not 1 <= m <= MAX_SOURCES:
        raise ValueError(f"m must be in 1..{MAX_SOURCES} (factorial cap)")
    lse = _logsumexp(v, axis=1)
    # cost[i, j] = ce of source j against label slot i
    cost = lse[None, :] - v[:, labels].T
    best_loss, best_perm = np.inf, None
    for perm in itertools.permutations(range(m)):
        loss = sum(cost[i, perm[i]] for i in range(m))
        if loss < best_loss:
            best_loss, best_perm = loss, perm
    return float(best_loss), best_perm


def predict_topm(v, m):
    """The m highest-logit classes; ties broken by lower class index."""
    v = np.asarray(v, dtype=float)
    if m > v.shape[0]:
        raise ValueError("m exceeds the number of classes")
    order = np.argsort(-v, kind="stable")
    return set(int(j) for j in order[:m])


def predict_threshold(v, lam):
    """Classes whose logit strictly exceeds the threshold."""
    v = np.asarray(v, dtype=float)
    return set(int(j) for j in np.nonzero(v > lam)[0])


@dataclass
class ComboVocabulary:
    """Bijection between training label sets and combination class ids."""

    combos: list  # sorted class-id tuples, index = combo id

    def __post_init__(self):
        if len(set(self.combos)) != len(self.combos):
            raise ValueError("duplicate combinations")
        self._index = {c: i for i, c in enumerate(self.combos)}

    def __len__(self):
        return len(self.combos)

    def encode(self, label_set):
        key = tuple(sorted(int(c) for c in label_set))
        try:
            return self._index[key]
        except KeyError:
            raise UnknownCombinationError(
                f"label combination {key} not in the training vocabulary"
            ) from None

    def contains(self, label_set):
        return tuple(sorted(int(c) for c in label_set)) in self._index

    def decode(self, combo_id):
        return set(self.combos[int(combo_id)])

    def class_membership(self, class_ids):
        """0/1 matrix M with M[c_idx, combo] = 1 iff class_ids[c_idx] in combo."""
        mat = np.zeros((len(class_ids), len(self.combos)))
        pos = {c: i for i, c in enumerate(class_ids)}
        for j, combo in enumerate(self.combos):
            for c in combo:
                if c in pos:
                    mat[pos[c], j] = 1.0
        return mat


def build_combo_vocab(label_sets):
    """Map each unique training label set to a combination class id."""
    label_sets = list(label_sets)
    if not label_sets:
        raise ValueError("no training label sets")
    unique = sorted({tuple(sorted(int(c) for c in s)) for s in label_sets})
    return ComboVocabulary(unique)


# ---------------------------------------------------------------------------
# Gradients and training


@dataclass
class TrainConfig:
    loss: str
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 60
    patience: int = 10
    rng_seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate and batch size must be positive")
        if self.max_epochs <= 0 or self.patience < 0:
            raise ValueError("max_epochs must be positive, patience nonnegative")


@dataclass
class Checkpoint:
    params: MlpParams
    epoch: int
    val_loss: float
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)


_PERM_CACHE = {
    m: np.array(list(itertools.permutations(range(m))), dtype=int)
    for m in range(1, MAX_SOURCES + 1)
}


def _pit_assign_batch(logits, labels):
    """Best label order per example for a (B, m, N) logit block.

    Returns (per-example loss, labels reordered so slot j matches source j).
    """
    b, m, _ = logits.shape
    lse = _logsumexp(logits, axis=2)                       # (B, m)
    picked = np.take_along_axis(logits, labels[:, None, :].repeat(m, axis=1), axis=2)
    # cost[b, i, j] = lse[b, j] - logits[b, j, labels[b, i]]
    cost = lse[:, None, :] - np.swapaxes(picked, 1, 2)
    perms = _PERM_CACHE[m]                                 # (m!, m)
    slots = np.broadcast_to(np.arange(m), perms.shape)
    totals = cost[:, slots, perms].sum(axis=2)             # (B, m!)
    best = np.argmin(totals, axis=1)                       # first min = lex smallest
    best_perms = perms[best]                               # (B, m): slot i -> source
    label_for_source = np.empty_like(labels)
    np.put_along_axis(label_for_source, best_perms, labels, axis=1)
    return totals[np.arange(b), best], label_for_source


def _output_grad(logits, batch, loss_kind):
    """Per-row dLoss/dlogits and the total loss for flattened rows."""
    if loss_kind == "bce":
        _, y = batch
        terms = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
        return sigmoid(logits) - y, float(terms.sum(axis=1).sum())
    _, y = batch
    y = np.asarray(y, dtype=int)
    p = softmax(logits, axis=1)
    lse = _logsumexp(logits, axis=1)
    loss = float((lse - logits[np.arange(len(y)), y]).sum())
    grad = p
    grad[np.arange(len(y)), y] -= 1.0
    return grad, loss


def _backprop(params, acts, dlogits):
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    delta = dlogits
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return grads_w, grads_b


def compute_gradients(params, batch, loss_kind):
    """Mean loss over the batch and congruent parameter gradients.

    Batch layouts:
      bce: (X (B,d), Y (B,N) multi-hot)
      ce:  (X (B,d), y (B,) class indices)
      pit: (X (B,mmax,d), labels (B,mmax), m (B,)) with padding past m.

    For pit, gradients flow through the best assignment found for the
    current parameters, held fixed.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss must be one of {LOSS_KINDS}")
    if loss_kind in ("bce", "ce"):
        x, y = batch
        n = len(x)
        acts = _forward_cached(params, np.asarray(x, dtype=float))
        dlogits, loss = _output_grad(acts[-1], (x, np.asarray(y)), loss_kind)
        gw, gb = _backprop(params, acts, dlogits / n)
        return loss / n, MlpParams(gw, gb)

    x, labels, m = batch
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m = np.asarray(m, dtype=int)
    n = len(x)
    total_loss = 0.0
    # Flatten all real source rows, remembering (example, slot) provenance.
    rows, row_labels, spans = [], [], []
    for mi in range(1, MAX_SOURCES + 1):
        idx = np.nonzero(m == mi)[0]
        if len(idx) == 0:
            continue
        block = x[idx, :mi, :]                      # (B_mi, mi, d)
        flat = block.reshape(-1, x.shape[2])
        acts = _forward_cached(params, flat)
        logits = acts[-1].reshape(len(idx), mi, -1)
        losses, label_for_source = _pit_assign_batch(logits, labels[idx, :mi])
        total_loss += float(losses.sum())
        p = softmax(logits, axis=2)
        p[np.arange(len(idx))[:, None], np.arange(mi)[None, :], label_for_source] -= 1.0
        rows.append((acts, p.reshape(-1, p.shape[2])))
    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]
    for acts, dlogits in rows:
        gw, gb = _backprop(params, acts, dlogits / n)
        for i in range(len(grads_w)):
            grads_w[i] += gw[i]
            grads_b[i] += gb[i]
    return total_loss / n, MlpParams(grads_w, grads_b)


def batch_loss(params, batch, loss_kind):
    """Mean loss only (used for validation)."""
    loss, _ = compute_gradients(params, batch, loss_kind)
    return loss


def _slice_batch(batch, idx, loss_kind):
    if loss_kind == "pit":
        x, labels, m = batch
        return x[idx], labels[idx], m[idx]
    x, y = batch
    return x[idx], y[idx]


def train(config, train_set, val_set, layer_sizes=None, init_params=None):
    """Mini-batch Adam with early stopping on validation loss.

    Returns the checkpoint with the best validation loss seen over all
    completed epochs.  Deterministic under ``config.rng_seed`` (both the
    parameter init and the per-epoch shuffle order derive from it).
    """
    n = len(train_set[0])
    if n == 0 or len(val_set[0]) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if init_params is None:
        if layer_sizes is None:
            raise ValueError("either layer_sizes or init_params is required")
        params = init_mlp_params(layer_sizes, config.rng_seed)
    else:
        params = init_params.copy()

    shuffle_rng = np.random.default_rng(np.random.SeedSequence((config.rng_seed, 1)))
    mom = [np.zeros_like(w) for w in params.weights] + [np.zeros_like(b) for b in params.biases]
    vel = [np.zeros_like(g) for g in mom]
    step = 0

    best = Checkpoint(params=params.copy(), epoch=0, val_loss=np.inf)
    train_hist, val_hist = [], []
    epochs_since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = compute_gradients(params, _slice_batch(train_set, idx, config.loss), config.loss)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {n_batches} (loss kind {config.loss})"
                )
            epoch_loss += loss
            n_batches += 1
            step += 1
            flat_grads = list(grads.weights) + list(grads.biases)
            flat_params = list(params.weights) + list(params.biases)
            bc1 = 1.0 - config.adam_beta1 ** step
            bc2 = 1.0 - config.adam_beta2 ** step
            for g, p, mo, ve in zip(flat_grads, flat_params, mom, vel):
                mo *= config.adam_beta1
                mo += (1.0 - config.adam_beta1) * g
                ve *= config.adam_beta2
                ve += (1.0 - config.adam_beta2) * g * g
                p -= config.learning_rate * (mo / bc1) / (np.sqrt(ve / bc2) + config.adam_eps)

        val_loss = batch_loss(params, val_set, config.loss)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"training diverged: non-finite val loss at epoch {epoch}")
        train_hist.append(epoch_loss / max(1, n_batches))
        val_hist.append(val_loss)
        if val_loss < best.val_loss:
            best = Checkpoint(params=params.copy(), epoch=epoch, val_loss=val_loss)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best > config.patience:
                break
    best.train_history = train_hist
    best.val_history = val_hist
    return best
