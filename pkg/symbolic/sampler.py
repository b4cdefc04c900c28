"""Constrained autoregressive sampling.

Each token is drawn from Categorical(Softmax(l + sum(priors) + sum(masks)))
where l are the policy logits. Every step records the observation the
policy saw and the adjustment that was added, which is all the trainer
needs to recompute differentiable log-likelihoods later.
"""

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .conf import search_setting
from .constraints import NEG_INF, ConstraintSet, LengthConstraint
from .exceptions import EnumerationTooLarge, InfeasibleStep, SamplingOverrun
from .priors import PriorSet
from .traversal import TraversalState

logger = logging.getLogger(__name__)


@dataclass
class SampleRecord:
    sequence: list
    log_prob: float
    entropies: list
    parents: list = field(default_factory=list, repr=False)
    siblings: list = field(default_factory=list, repr=False)
    adjustments: np.ndarray = field(default=None, repr=False)

    @property
    def length(self):
        return len(self.sequence)

    def as_dict(self, library, reward=None):
        payload = {
            "sequence": library.decode(self.sequence),
            "log_prob": self.log_prob,
            "length": self.length,
        }
        if reward is not None:
            payload["reward"] = reward
        return payload


def adjusted_distribution(logits, adjustment):
    """Probabilities and log-probabilities of Softmax(logits + adjustment).

    Masked entries are left out of the max and get probability exactly 0.
    """
    z = logits + adjustment
    allowed = z != NEG_INF
    peak = z[allowed].max()
    shifted = np.where(allowed, z - peak, 0.0)
    weights = np.where(allowed, np.exp(shifted), 0.0)
    total = weights.sum()
    probs = weights / total
    log_probs = np.where(allowed, shifted - np.log(total), NEG_INF)
    return probs, log_probs


def _entropy(probs, log_probs):
    positive = probs > 0
    return float(-(probs[positive] * log_probs[positive]).sum())


def _draw(probs, rng):
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(index, len(probs) - 1)


def observation(state, empty):
    if state.length == 0:
        return empty, empty
    context = state.context()
    sibling = context.left_sibling_root
    return context.parent, empty if sibling is None else sibling


class Enumeration(Mapping):
    """Exact distribution over complete sequences.

    ``lost_mass`` is the probability of prefixes that hit an infeasible
    step or ran past the enumeration length without completing.
    """

    def __init__(self, probabilities, lost_mass):
        self.probabilities = probabilities
        self.lost_mass = lost_mass

    def __getitem__(self, sequence):
        return self.probabilities[tuple(sequence)]

    def __iter__(self):
        return iter(self.probabilities)

    def __len__(self):
        return len(self.probabilities)

    @property
    def total(self):
        return float(sum(self.probabilities.values()))

    @property
    def support(self):
        return set(self.probabilities)


class Sampler:
    """Samples traversals from a policy under priors and constraints.

    Without a configured maximum length the sampler adds an implicit
    length constraint ``[1, length_cap]``; the safety cap on steps is
    twice the effective maximum length.
    """

    def __init__(self, policy, library, priors=None, constraints=None, length_cap=None):
        self.policy = policy
        self.library = library
        self.priors = priors if priors is not None else PriorSet(library)
        constraints = constraints if constraints is not None else ConstraintSet(library)
        if not constraints.has_length_bound():
            cap = length_cap or search_setting("MAX_LENGTH")
            constraints = constraints.with_constraint(
                LengthConstraint(library, 1, cap, name="length_cap")
            )
        self.constraints = constraints
        self.max_length = constraints.max_length
        self.safety_cap = 2 * self.max_length
        self.empty = len(library)

    def adjustment(self, state):
        """Summed prior adjustment plus composed constraint mask."""
        return self.priors.adjustment(state) + self.constraints.mask(state).values

    def _check_cap(self, state):
        if state.length >= self.safety_cap:
            raise SamplingOverrun(self.safety_cap, self.library.decode(state.sequence))

    def sample_sequence(self, rng):
        state = TraversalState(self.library)
        hidden = self.policy.initial_state()
        log_prob = 0.0
        entropies, parents, siblings, adjustments = [], [], [], []
        while not state.is_complete:
            self._check_cap(state)
            parent, sibling = observation(state, self.empty)
            logits, hidden = self.policy.forward_logits(hidden, (parent, sibling))
            adjustment = self.adjustment(state)
            probs, log_probs = adjusted_distribution(logits, adjustment)
            token = _draw(probs, rng)
            log_prob += log_probs[token]
            entropies.append(_entropy(probs, log_probs))
            parents.append(parent)
            siblings.append(sibling)
            adjustments.append(adjustment)
            state.push(token)
        return SampleRecord(
            sequence=list(state.sequence),
            log_prob=float(log_prob),
            entropies=entropies,
            parents=parents,
            siblings=siblings,
            adjustments=np.array(adjustments),
        )

    def sample_batch(self, batch_size, seed, iteration=0):
        """Sample ``batch_size`` traversals in lockstep.

        Element b draws from its own generator seeded by
        ``(seed, iteration, b)``, so results do not depend on scheduling.
        """
        rngs = [np.random.default_rng([seed, iteration, b]) for b in range(batch_size)]
        states = [TraversalState(self.library) for _ in range(batch_size)]
        log_probs_total = np.zeros(batch_size)
        entropies = [[] for _ in range(batch_size)]
        parents = [[] for _ in range(batch_size)]
        siblings = [[] for _ in range(batch_size)]
        adjustments = [[] for _ in range(batch_size)]
        hidden = self.policy.initial_state(batch_size)
        active = list(range(batch_size))
        while active:
            observed = [
                (self.empty, self.empty) if states[b].is_complete else observation(states[b], self.empty)
                for b in range(batch_size)
            ]
            logits, hidden = self.policy.batch_logits(
                hidden, [o[0] for o in observed], [o[1] for o in observed]
            )
            still_active = []
            for b in active:
                state = states[b]
                self._check_cap(state)
                adjustment = self.adjustment(state)
                probs, log_probs = adjusted_distribution(logits[b], adjustment)
                token = _draw(probs, rngs[b])
                log_probs_total[b] += log_probs[token]
                entropies[b].append(_entropy(probs, log_probs))
                parents[b].append(observed[b][0])
                siblings[b].append(observed[b][1])
                adjustments[b].append(adjustment)
                state.push(token)
                if not state.is_complete:
                    still_active.append(b)
            active = still_active
        return [
            SampleRecord(
                sequence=list(states[b].sequence),
                log_prob=float(log_probs_total[b]),
                entropies=entropies[b],
                parents=parents[b],
                siblings=siblings[b],
                adjustments=np.array(adjustments[b]),
            )
            for b in range(batch_size)
        ]

    def sequence_log_prob(self, sequence):
        """Log-likelihood ``sample_sequence`` records for ``sequence``;
        NEG_INF if some step of it is masked or infeasible."""
        state = TraversalState(self.library)
        hidden = self.policy.initial_state()
        log_prob = 0.0
        for token in sequence:
            if state.is_complete:
                return NEG_INF
            parent, sibling = observation(state, self.empty)
            logits, hidden = self.policy.forward_logits(hidden, (parent, sibling))
            try:
                adjustment = self.adjustment(state)
            except InfeasibleStep:
                return NEG_INF
            probs, log_probs = adjusted_distribution(logits, adjustment)
            if probs[token] == 0.0:
                return NEG_INF
            log_prob += log_probs[token]
            state.push(token)
        if not state.is_complete:
            return NEG_INF
        return float(log_prob)

    def enumerate_distribution(self, max_len=None, limit=None):
        """Exact probability of every reachable complete sequence."""
        max_len = max_len or self.max_length
        limit = limit or search_setting("ENUMERATION_LIMIT")
        probabilities = {}
        lost = 0.0
        visited = 0

        def expand(state, hidden, mass):
            nonlocal lost, visited
            visited += 1
            if visited > limit:
                raise EnumerationTooLarge(visited, limit)
            if state.length >= max_len:
                lost += mass
                return
            parent, sibling = observation(state, self.empty)
            logits, next_hidden = self.policy.forward_logits(hidden, (parent, sibling))
            try:
                adjustment = self.adjustment(state)
            except InfeasibleStep:
                lost += mass
                return
            probs, _ = adjusted_distribution(logits, adjustment)
            for token in np.flatnonzero(probs > 0):
                child = state.append(int(token))
                child_mass = mass * probs[token]
                if child.is_complete:
                    probabilities[tuple(child.sequence)] = child_mass
                else:
                    expand(child, next_hidden, child_mass)

        expand(TraversalState(self.library), self.policy.initial_state(), 1.0)
        if lost > 0:
            logger.debug("enumeration lost %.3g probability mass to dead ends", lost)
        return Enumeration(probabilities, lost)


def sample_sequence(policy, library, priors=None, constraints=None, rng=None):
    rng = rng if rng is not None else np.random.default_rng()
    return Sampler(policy, library, priors, constraints).sample_sequence(rng)


def sequence_log_prob(policy, library, priors, constraints, sequence):
    return Sampler(policy, library, priors, constraints).sequence_log_prob(sequence)


def enumerate_distribution(policy, library, priors=None, constraints=None, max_len=None, limit=None):
    return Sampler(policy, library, priors, constraints, length_cap=max_len).enumerate_distribution(
        max_len, limit
    )


def dump_batch(path, library, records, rewards):
    """Append a sampled batch as JSON lines (sequence, log_prob, reward)."""
    with open(path, "a") as handle:
        for record, reward in zip(records, rewards):
            handle.write(json.dumps(record.as_dict(library, float(reward))) + "\n")
