'''
Satisfaction surrogate: a small feed-forward classifier over encoded user
contexts, its training, cross-validation, persistence and the feedback-driven
management loop that corrects it while deployed.
'''
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from opa.config import get_param
from opa.errors import DegenerateLabelsError
from opa.satisfaction import LEVELS, LabeledSample, samples_to_frame

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
NUM_CLASSES = len(LEVELS)
MIN_TRAINING_SAMPLES = 100
MAX_ACCURACY_DROP = 0.05
MASKED_BIAS = -1e3

CATEGORICAL_FEATURES = ('classified_day', 'time_period', 'location_name', 'speed_range', 'activity', 'application',
                        'service', 'user_id')
NUMERIC_FEATURES = ('demand_rate', 'delta', 'delta_ratio')


@dataclass(frozen=True)
class SurrogateSpec:

    hidden_layers: tuple = (128, 32, 16, 8)
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 128
    seed: int = 11

    def __post_init__(self):

        object.__setattr__(self, 'hidden_layers', tuple(int(n) for n in self.hidden_layers))

        if any(n < 1 for n in self.hidden_layers):
            raise ValueError("Hidden layers need at least one neuron each.")

        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0.0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("Invalid training hyperparameters.")

    @classmethod
    def from_params(cls, params):

        return cls(hidden_layers=get_param(params, '/surrogate/hidden_layers'),
                   learning_rate=float(get_param(params, '/surrogate/learning_rate')),
                   momentum=float(get_param(params, '/surrogate/momentum')),
                   epochs=int(get_param(params, '/surrogate/epochs')),
                   batch_size=int(get_param(params, '/surrogate/batch_size')),
                   seed=int(get_param(params, '/surrogate/seed')))


def _numeric(ctx, delta):

    return (ctx.demand_rate, delta, delta / max(ctx.max_delta, 1))


class FeatureEncoder:

    '''
    One-hot blocks for the categorical context features followed by min-max
    scaled numeric features. Vocabularies are frozen at fit time and unseen
    categories encode as an all-zero block.
    '''

    def __init__(self, vocabularies, minimum, maximum):

        self.vocabularies = dict((name, list(vocabularies[name])) for name in CATEGORICAL_FEATURES)
        self.minimum = np.asarray(minimum, dtype=float)
        self.maximum = np.asarray(maximum, dtype=float)
        self.index = dict((name, dict((str(v), i) for i, v in enumerate(self.vocabularies[name])))
                          for name in CATEGORICAL_FEATURES)

        offsets = np.cumsum([0] + [len(self.vocabularies[n]) for n in CATEGORICAL_FEATURES])
        self.offsets = dict(zip(CATEGORICAL_FEATURES, offsets[:-1]))
        self.categorical_width = int(offsets[-1])

    @classmethod
    def fit(cls, contexts, deltas):

        vocabularies = dict((name, sorted(set(str(getattr(c, name)) for c in contexts))) for name in CATEGORICAL_FEATURES)
        numeric = np.array([_numeric(c, d) for c, d in zip(contexts, deltas)], dtype=float)

        return cls(vocabularies, numeric.min(axis=0), numeric.max(axis=0))

    @property
    def width(self):

        return self.categorical_width + len(NUMERIC_FEATURES)

    def encode_batch(self, contexts, deltas):

        X = np.zeros((len(contexts), self.width))

        for row, ctx in enumerate(contexts):
            for name in CATEGORICAL_FEATURES:
                position = self.index[name].get(str(getattr(ctx, name)))

                if position is not None:
                    X[row, self.offsets[name] + position] = 1.0

        numeric = np.array([_numeric(c, d) for c, d in zip(contexts, deltas)], dtype=float).reshape(len(contexts), -1)
        span = self.maximum - self.minimum
        X[:, self.categorical_width:] = np.where(span > 0.0, (numeric - self.minimum) / np.where(span > 0.0, span, 1.0), 0.0)

        return X

    def encode(self, ctx, delta):

        return self.encode_batch([ctx], [delta])[0]

    def to_dict(self):

        return {'vocabularies': self.vocabularies, 'minimum': self.minimum.tolist(), 'maximum': self.maximum.tolist()}

    @classmethod
    def from_dict(cls, state):

        return cls(state['vocabularies'], state['minimum'], state['maximum'])


def softmax(z):

    exp = np.exp(z - z.max(axis=1, keepdims=True))

    return exp / exp.sum(axis=1, keepdims=True)


class TrainedSurrogate:

    '''
    Feed-forward classifier: ReLU hidden layers and a softmax output over the
    five satisfaction levels. Weights are stored input-major, W[i] is (fan_in, fan_out).
    '''

    name = 'surrogate'

    def __init__(self, encoder, weights, biases, spec=SurrogateSpec(), metadata=None):

        self.encoder = encoder
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.spec = spec
        self.metadata = dict(metadata or {})

    def forward(self, X):

        ''' Returns the activations of every layer, input first. '''

        activations = [X]

        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            activations.append(np.maximum(activations[-1] @ W + b, 0.0))

        activations.append(softmax(activations[-1] @ self.weights[-1] + self.biases[-1]))

        return activations

    def scores(self, X):

        return self.forward(X)[-1]

    def predict_encoded(self, X):

        # argmax returns the first maximum so ties resolve to the lower level
        return np.argmax(self.scores(X), axis=1) + 1

    def levels(self, contexts, deltas):

        return self.predict_encoded(self.encoder.encode_batch(contexts, deltas))

    def __call__(self, ctx, delta):

        return int(self.levels([ctx], [delta])[0])

    def accuracy(self, samples):

        return sample_accuracy(self, samples)

    def copy(self):

        return copy.deepcopy(self)


class OffsetSurrogate:

    ''' Adds a fixed level offset to a wrapped predictor, clipped to 1-5. '''

    name = 'offset'

    def __init__(self, base, offset):

        self.base = base
        self.offset = int(offset)

    def levels(self, contexts, deltas):

        return np.clip(np.asarray(self.base.levels(contexts, deltas)) + self.offset, 1, NUM_CLASSES)

    def __call__(self, ctx, delta):

        return int(self.levels([ctx], [delta])[0])

    def accuracy(self, samples):

        return sample_accuracy(self, samples)


def sample_accuracy(model, samples):

    if not samples:
        return 0.0

    predicted = model.levels([s.context for s in samples], [s.delta for s in samples])

    return float(np.mean(np.asarray(predicted) == np.array([s.satisfaction for s in samples])))


def dataset_hash(samples):

    csv = samples_to_frame(samples).to_csv(index=False, lineterminator='\n')

    return hashlib.sha256(csv.encode('utf-8')).hexdigest()


def encode_samples(encoder, samples):

    X = encoder.encode_batch([s.context for s in samples], [s.delta for s in samples])
    y = np.array([s.satisfaction - 1 for s in samples], dtype=int)

    return X, y


def balance(X, y, rng, require_all=True):

    '''
    Oversamples every class with replacement up to the majority class count.

    With require_all=False absent classes are skipped instead of rejected.
    '''

    counts = np.bincount(y, minlength=NUM_CLASSES)

    if require_all and np.any(counts == 0):
        raise DegenerateLabelsError("degenerate labels")

    target = counts.max()
    extra = [rng.choice(np.flatnonzero(y == c), size=target - counts[c], replace=True)
             for c in range(NUM_CLASSES) if counts[c] > 0]
    index = np.concatenate([np.arange(len(y))] + extra)

    return X[index], y[index]


def init_network(sizes, rng):

    ''' He-initialised weights with small positive biases. '''

    weights = [rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in) for n_in, n_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.full(n_out, 0.01) for n_out in sizes[1:]]

    return weights, biases


def fit_network(model, X, y, epochs, rng):

    '''
    Mini-batch gradient descent with momentum on the softmax cross-entropy.

    Batches are drawn from a seeded permutation each epoch.
    '''

    spec = model.spec
    target = np.eye(NUM_CLASSES)[y]
    velocity_w = [np.zeros_like(W) for W in model.weights]
    velocity_b = [np.zeros_like(b) for b in model.biases]

    for epoch in range(epochs):
        order = rng.permutation(len(y))
        loss = 0.0

        for start in range(0, len(y), spec.batch_size):
            batch = order[start:start + spec.batch_size]
            activations = model.forward(X[batch])
            probs = activations[-1]
            loss += -np.log(np.maximum(probs[np.arange(len(batch)), y[batch]], 1e-12)).sum()

            grad = (probs - target[batch]) / len(batch)

            for layer in reversed(range(len(model.weights))):
                grad_w = activations[layer].T @ grad
                grad_b = grad.sum(axis=0)

                if layer > 0:
                    grad = (grad @ model.weights[layer].T) * (activations[layer] > 0.0)

                velocity_w[layer] = spec.momentum * velocity_w[layer] - spec.learning_rate * grad_w
                velocity_b[layer] = spec.momentum * velocity_b[layer] - spec.learning_rate * grad_b
                model.weights[layer] += velocity_w[layer]
                model.biases[layer] += velocity_b[layer]

        logger.debug("Epoch %d/%d, loss %.4f", epoch + 1, epochs, loss / max(len(y), 1))

    return model


def train(spec, data):

    '''
    Trains a surrogate on labelled samples.

    Arguments:
        spec    - SurrogateSpec
        data    - list of LabeledSample, at least MIN_TRAINING_SAMPLES with every level present
    '''

    if len(data) < MIN_TRAINING_SAMPLES:
        raise ValueError("At least {} samples are required for training, got {}.".format(MIN_TRAINING_SAMPLES, len(data)))

    rng = np.random.default_rng(spec.seed)
    encoder = FeatureEncoder.fit([s.context for s in data], [s.delta for s in data])
    X, y = balance(*encode_samples(encoder, data), rng)

    weights, biases = init_network([encoder.width] + list(spec.hidden_layers) + [NUM_CLASSES], rng)
    model = TrainedSurrogate(encoder, weights, biases, spec)
    fit_network(model, X, y, spec.epochs, rng)

    model.metadata = {'dataset_hash': dataset_hash(data), 'samples': len(data), 'epochs': spec.epochs,
                      'training_accuracy': model.accuracy(data)}

    logger.info("Surrogate trained: %d samples, training accuracy %.4f", len(data), model.metadata['training_accuracy'])

    return model


def predict(model, ctx, delta):

    return model(ctx, delta)


def absorb_offsets(model):

    '''
    Copy of the network behind a stack of OffsetSurrogate wrappers, with the
    summed offset folded into the output layer.

    Output column c takes the weights of level c - offset and levels the offset
    cannot reach are masked with a large negative bias. The copy predicts what
    the stack serves except where the wrapper clips at 1 or 5.
    '''

    offset = 0

    while isinstance(model, OffsetSurrogate):
        offset += model.offset
        model = model.base

    if not isinstance(model, TrainedSurrogate):
        raise TypeError("Only a trained network can be fine-tuned, got {}.".format(type(model).__name__))

    tuned = model.copy()

    if offset:
        source = np.arange(NUM_CLASSES) - offset
        reachable = (source >= 0) & (source < NUM_CLASSES)
        W, b = tuned.weights[-1], tuned.biases[-1]
        shifted_w = np.zeros_like(W)
        shifted_b = np.full_like(b, MASKED_BIAS)
        shifted_w[:, reachable] = W[:, source[reachable]]
        shifted_b[reachable] = b[source[reachable]]
        tuned.weights[-1], tuned.biases[-1] = shifted_w, shifted_b

    return tuned


def fine_tune(model, samples, epochs, seed=None):

    '''
    Continues training the served predictor with the encoder kept fixed.

    Offsets of wrapped predictors are folded into the network first, and the
    samples are class-balanced as in train over the levels they contain.
    '''

    tuned = absorb_offsets(model)
    rng = np.random.default_rng(tuned.spec.seed if seed is None else seed)
    X, y = balance(*encode_samples(tuned.encoder, samples), rng, require_all=False)
    fit_network(tuned, X, y, epochs, rng)
    tuned.metadata['fine_tuned_samples'] = tuned.metadata.get('fine_tuned_samples', 0) + len(samples)

    return tuned


def save_surrogate(model, path):

    meta = {'format_version': FORMAT_VERSION,
            'encoder': model.encoder.to_dict(),
            'spec': {'hidden_layers': list(model.spec.hidden_layers), 'learning_rate': model.spec.learning_rate,
                     'momentum': model.spec.momentum, 'epochs': model.spec.epochs,
                     'batch_size': model.spec.batch_size, 'seed': model.spec.seed},
            'metadata': model.metadata}

    arrays = dict(('W{}'.format(i), W) for i, W in enumerate(model.weights))
    arrays.update(('b{}'.format(i), b) for i, b in enumerate(model.biases))

    with open(path, 'wb') as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_surrogate(path):

    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive['meta']))

        if meta.get('format_version') != FORMAT_VERSION:
            raise ValueError("Unsupported surrogate format version {}.".format(meta.get('format_version')))

        layers = len([k for k in archive.files if k.startswith('W')])
        weights = [archive['W{}'.format(i)] for i in range(layers)]
        biases = [archive['b{}'.format(i)] for i in range(layers)]

    return TrainedSurrogate(FeatureEncoder.from_dict(meta['encoder']), weights, biases, SurrogateSpec(**meta['spec']),
                            meta['metadata'])


@dataclass
class CrossValidationReport:

    fold_accuracy: list
    mean: float
    std: float

    def as_frame(self):

        ''' One row: fold-1 ... fold-k, average and standard deviation, in percent. '''

        row = dict(('fold-{}'.format(i + 1), 100.0 * a) for i, a in enumerate(self.fold_accuracy))
        row['average'] = 100.0 * self.mean
        row['std'] = 100.0 * self.std

        return pd.DataFrame([row])


def stratified_folds(labels, folds, rng):

    '''
    Assigns every sample a fold by dealing each shuffled class round-robin.

    The deal continues where the previous class stopped so fold sizes stay within one.
    '''

    labels = np.asarray(labels)
    assignment = np.empty(len(labels), dtype=int)
    position = 0

    for level in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == level))
        assignment[members] = (position + np.arange(len(members))) % folds
        position += len(members)

    return assignment


def cross_validate(spec, data, folds=10, trainer=None):

    '''
    Stratified k-fold cross-validation.

    Arguments:
        trainer - callable (spec, samples) -> predictor with .levels(contexts, deltas), defaults to train
    '''

    if folds < 2:
        raise ValueError("At least two folds are required.")

    if len(data) < folds:
        raise ValueError("Fewer samples ({}) than folds ({}).".format(len(data), folds))

    trainer = trainer or train
    assignment = stratified_folds([s.satisfaction for s in data], folds, np.random.default_rng(spec.seed))
    accuracy = []

    for k in range(folds):
        training = [s for s, f in zip(data, assignment) if f != k]
        held_out = [s for s, f in zip(data, assignment) if f == k]
        accuracy.append(sample_accuracy(trainer(spec, training), held_out))
        logger.info("Fold %d/%d accuracy %.4f", k + 1, folds, accuracy[-1])

    return CrossValidationReport(fold_accuracy=accuracy, mean=float(np.mean(accuracy)), std=float(np.std(accuracy, ddof=1)))


@dataclass
class CorrectionEntry:

    user_id: int
    delta: float
    predicted: int
    measured: int
    direction: str
    steps: list = field(default_factory=list)


class SurrogateManager:

    '''
    Feedback loop around a deployed surrogate.

    Every observation whose measured level differs from the prediction is logged
    with the resource correction it calls for ("+R_d" when the user is less
    satisfied than predicted, "-R_d" otherwise) and buffered. Each time
    buffer_size further mismatches have been collected the model is fine-tuned on
    the whole buffer; an update that lowers buffer accuracy by more than
    MAX_ACCURACY_DROP is rejected.

    Arguments:
        model           - Deployed predictor
        r_delta_step    - Resource correction step in kbps
        buffer_size     - Mismatches between retraining rounds
        feedback_fn     - Optional (ctx, delta) -> measured level used to step resources towards the prediction
        epochs          - Fine-tuning epochs per retraining round
        max_steps       - Correction steps per mismatch
    '''

    def __init__(self, model, r_delta_step, buffer_size=50, feedback_fn=None, epochs=20, max_steps=10):

        if r_delta_step <= 0 or buffer_size < 1:
            raise ValueError("r_delta_step and buffer_size must be positive.")

        self.model = model
        self.r_delta_step = r_delta_step
        self.buffer_size = buffer_size
        self.feedback_fn = feedback_fn
        self.epochs = epochs
        self.max_steps = max_steps

        self.log = []
        self.buffer = []
        self.retrains = 0
        self.rejected = 0
        self.pending = 0

    def observe(self, ctx, delta, predicted, measured):

        if predicted == measured:
            return None

        entry = CorrectionEntry(user_id=ctx.user_id, delta=float(delta), predicted=int(predicted), measured=int(measured),
                                direction='+R_d' if measured < predicted else '-R_d')

        if self.feedback_fn is not None:
            self._correct(ctx, entry)

        self.log.append(entry)
        self._buffer(ctx, delta, measured)

        return entry

    def _correct(self, ctx, entry):

        # More resources lower the shortfall
        step = -self.r_delta_step if entry.direction == '+R_d' else self.r_delta_step
        delta = entry.delta

        for _ in range(self.max_steps):
            delta = min(delta + step, ctx.demand_rate)
            level = int(self.feedback_fn(ctx, delta))
            entry.steps.append((delta, level))

            if (step < 0 and level >= entry.predicted) or (step > 0 and level <= entry.predicted):
                break

    def _buffer(self, ctx, delta, measured):

        delta = int(round(delta))
        self.buffer.append(LabeledSample(context=ctx, given_rate=ctx.demand_rate - delta, delta=delta,
                                         satisfaction=int(measured)))
        self.pending += 1

        if self.pending >= self.buffer_size:
            self.pending = 0
            self.retrain()

    def retrain(self):

        before = sample_accuracy(self.model, self.buffer)
        candidate = fine_tune(self.model, self.buffer, self.epochs)
        after = sample_accuracy(candidate, self.buffer)

        if after < before - MAX_ACCURACY_DROP:
            self.rejected += 1
            logger.warning("Surrogate update rejected: buffer accuracy %.4f -> %.4f", before, after)
            return False

        self.model = candidate
        self.retrains += 1
        logger.info("Surrogate retrained on %d feedback samples, buffer accuracy %.4f -> %.4f", len(self.buffer), before, after)

        return True


@dataclass
class ManagementResult:

    model: object
    log: list
    retrains: int
    rejected: int


def manage_surrogate(model, stream, r_delta_step, buffer_size=50, feedback_fn=None, epochs=20):

    ''' Runs the feedback loop over a stream of (ctx, delta, predicted, measured) tuples. '''

    manager = SurrogateManager(model, r_delta_step, buffer_size, feedback_fn, epochs)

    for ctx, delta, predicted, measured in stream:
        manager.observe(ctx, delta, predicted, measured)

    return ManagementResult(model=manager.model, log=manager.log, retrains=manager.retrains, rejected=manager.rejected)
