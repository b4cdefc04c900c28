import math
from collections import Counter

import numpy as np
import torch
from django.test import SimpleTestCase, tag

from symbolic.constraints import (
    NEG_INF,
    BlacklistConstraint,
    ConstraintSet,
    LengthConstraint,
    LexicographicalConstraint,
    RelationalConstraint,
    RepeatConstraint,
    SubtreeLengthConstraint,
    TypeUnitConstraint,
    ValencyConstraint,
    validate_sequence,
)
from symbolic.exceptions import EnumerationTooLarge, SamplingOverrun
from symbolic.library import default_sr_library
from symbolic.policy import UniformPolicy, init_policy
from symbolic.priors import (
    PositionalPrior,
    PriorSet,
    SoftLengthPrior,
    TokenSpecificPrior,
    positional_table_from_reference,
)
from symbolic.sampler import (
    Sampler,
    adjusted_distribution,
    enumerate_distribution,
    sample_sequence,
    sequence_log_prob,
)
from symbolic.traversal import TraversalState

from .helpers import make_library


def perturbed_policy(library, seed=0, scale=0.7):
    policy = init_policy(library, hidden_width=8, seed=seed)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        policy.output.weight.copy_(scale * torch.randn(policy.output.weight.shape, generator=generator,
                                                        dtype=policy.output.weight.dtype))
        policy.output.bias.copy_(scale * torch.randn(policy.output.bias.shape, generator=generator,
                                                      dtype=policy.output.bias.dtype))
    return policy


def length_set(library, max_len, *constraints):
    return ConstraintSet(library, [LengthConstraint(library, 1, max_len)] + list(constraints))


class DistributionTests(SimpleTestCase):
    def test_masked_entries_get_zero_probability(self):
        probs, log_probs = adjusted_distribution(np.array([1.0, 2.0, 3.0]), np.array([0.0, NEG_INF, 0.0]))
        self.assertEqual(probs[1], 0.0)
        self.assertEqual(log_probs[1], NEG_INF)
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-15)

    def test_large_logits_stay_finite(self):
        probs, _ = adjusted_distribution(np.array([1000.0, 999.0]), np.zeros(2))
        self.assertTrue(np.all(np.isfinite(probs)))
        self.assertAlmostEqual(probs[0], 1 / (1 + math.exp(-1)), delta=1e-12)


class SamplerExampleTests(SimpleTestCase):
    def test_single_terminal_library(self):
        library = make_library("x:0")
        record = sample_sequence(UniformPolicy(1), library, rng=np.random.default_rng(0))
        self.assertEqual(record.sequence, [0])
        self.assertEqual(record.log_prob, 0.0)

    def test_two_sequences_of_equal_mass(self):
        library = make_library("+:2", "x:0")
        distribution = enumerate_distribution(UniformPolicy(2), library, max_len=3)
        self.assertEqual(dict(distribution), {(1,): 0.5, (0, 1, 1): 0.5})
        self.assertEqual(distribution.lost_mass, 0.0)

    def test_blacklist_forces_the_other_sequence(self):
        library = make_library("+:2", "x:0")
        constraints = length_set(library, 3, BlacklistConstraint(library, [[1]]))
        distribution = enumerate_distribution(UniformPolicy(2), library, constraints=constraints)
        self.assertEqual(dict(distribution), {(0, 1, 1): 1.0})
        record = sample_sequence(UniformPolicy(2), library, constraints=constraints, rng=np.random.default_rng(3))
        self.assertEqual(record.sequence, [0, 1, 1])
        self.assertEqual(record.log_prob, 0.0)

    def test_implicit_length_cap(self):
        library = make_library("+:2", "x:0")
        sampler = Sampler(UniformPolicy(2), library, length_cap=5)
        self.assertEqual(sampler.max_length, 5)
        self.assertEqual(sampler.safety_cap, 10)
        self.assertIn("length_cap", sampler.constraints.names)

    def test_overrun_is_reported(self):
        library = make_library("+:2", "x:0")
        constraints = length_set(library, 3, BlacklistConstraint(library, [[1]]))
        sampler = Sampler(UniformPolicy(2), library, constraints=constraints)
        sampler.safety_cap = 2
        with self.assertRaises(SamplingOverrun):
            sampler.sample_sequence(np.random.default_rng(0))

    def test_uniform_policy_is_symmetric(self):
        library = make_library("+:2", "x:0", "y:0")
        distribution = enumerate_distribution(UniformPolicy(3), library, max_len=3)
        masses = {distribution[library.encode(s)] for s in ("+ x y", "+ y x", "+ x x", "+ y y")}
        self.assertEqual(len(masses), 1)
        self.assertAlmostEqual(distribution[library.encode("x")], 1 / 3, delta=1e-15)


class LogLikelihoodTests(SimpleTestCase):
    def setUp(self):
        self.library = make_library("+:2", "sin:1", "x:0", "y:0")
        self.policy = perturbed_policy(self.library)
        self.priors = PriorSet(self.library, [SoftLengthPrior(self.library, 3, 2)])
        self.constraints = length_set(self.library, 7, RepeatConstraint(self.library, [3], 0, 1))

    def test_replay_matches_sampling(self):
        sampler = Sampler(self.policy, self.library, self.priors, self.constraints)
        rng = np.random.default_rng(11)
        for _ in range(20):
            record = sampler.sample_sequence(rng)
            self.assertEqual(sampler.sequence_log_prob(record.sequence), record.log_prob)
            self.assertLessEqual(record.log_prob, 0.0)

    def test_batch_matches_replay(self):
        sampler = Sampler(self.policy, self.library, self.priors, self.constraints)
        for record in sampler.sample_batch(16, seed=2, iteration=1):
            self.assertAlmostEqual(sampler.sequence_log_prob(record.sequence), record.log_prob, delta=1e-10)
            self.assertEqual(len(record.entropies), record.length)
            self.assertEqual(record.adjustments.shape, (record.length, len(self.library)))

    def test_masked_sequence_is_impossible(self):
        value = sequence_log_prob(self.policy, self.library, self.priors, self.constraints, self.library.encode("+ y y"))
        self.assertEqual(value, NEG_INF)
        incomplete = sequence_log_prob(self.policy, self.library, self.priors, self.constraints, [0])
        self.assertEqual(incomplete, NEG_INF)

    def test_enumeration_sums_to_one(self):
        distribution = enumerate_distribution(self.policy, self.library, self.priors, self.constraints)
        self.assertAlmostEqual(distribution.total + distribution.lost_mass, 1.0, delta=1e-9)
        sampler = Sampler(self.policy, self.library, self.priors, self.constraints)
        for sequence, probability in list(distribution.items())[:50]:
            self.assertAlmostEqual(math.log(probability), sampler.sequence_log_prob(sequence), delta=1e-9)


class BatchTests(SimpleTestCase):
    def setUp(self):
        self.library = make_library("+:2", "sin:1", "x:0")
        self.sampler = Sampler(perturbed_policy(self.library), self.library, constraints=length_set(self.library, 9))

    def test_same_seed_same_batch(self):
        first = self.sampler.sample_batch(12, seed=4, iteration=3)
        second = self.sampler.sample_batch(12, seed=4, iteration=3)
        self.assertEqual([r.sequence for r in first], [r.sequence for r in second])
        self.assertEqual([r.log_prob for r in first], [r.log_prob for r in second])

    def test_elements_do_not_depend_on_batch_size(self):
        small = self.sampler.sample_batch(3, seed=4, iteration=3)
        large = self.sampler.sample_batch(10, seed=4, iteration=3)
        self.assertEqual([r.sequence for r in small], [r.sequence for r in large[:3]])

    def test_every_sequence_is_complete_and_within_bounds(self):
        for record in self.sampler.sample_batch(50, seed=0):
            self.assertTrue(TraversalState(self.library, record.sequence).is_complete)
            self.assertLessEqual(record.length, 9)


class EnumerationTests(SimpleTestCase):
    def test_normalized_without_dead_ends(self):
        library = make_library("+:2", "sin:1", "x:0")
        distribution = enumerate_distribution(UniformPolicy(3), library, max_len=7)
        self.assertAlmostEqual(distribution.total, 1.0, delta=1e-9)
        self.assertEqual(distribution.lost_mass, 0.0)

    def test_too_large(self):
        library = make_library("+:2", "sin:1", "x:0")
        with self.assertRaises(EnumerationTooLarge):
            enumerate_distribution(UniformPolicy(3), library, max_len=7, limit=5)

    def test_token_specific_prior_reweights_each_step(self):
        library = make_library("+:2", "sin:1", "x:0")
        weights = np.array([1.0, 2.0, 3.0])
        priors = PriorSet(library, [TokenSpecificPrior(library, weights)])
        constraints = length_set(library, 4)
        distribution = enumerate_distribution(UniformPolicy(3), library, priors, constraints)
        for sequence, probability in distribution.items():
            state = TraversalState(library)
            expected = 1.0
            for token in sequence:
                allowed = constraints.mask(state).values == 0
                expected *= weights[token] / weights[allowed].sum()
                state.push(token)
            self.assertAlmostEqual(probability, expected, delta=1e-12)

    def test_priors_do_not_change_support(self):
        library = make_library("+:2", "sin:1", "x:0", "y:0")
        plain = enumerate_distribution(UniformPolicy(4), library, max_len=6)
        biased = enumerate_distribution(
            UniformPolicy(4),
            library,
            PriorSet(library, [SoftLengthPrior(library, 2, 1), TokenSpecificPrior(library, [5.0, 0.1, 1.0, 2.0])]),
            max_len=6,
        )
        self.assertEqual(plain.support, biased.support)


@tag("slow")
class SamplingFrequencyTests(SimpleTestCase):
    """Sampled frequencies agree with exact probabilities within a few
    standard errors (fixed seeds)."""

    def assertWithinStandardErrors(self, count, total, probability, label="", errors=3):
        standard_error = math.sqrt(probability * (1 - probability) / total)
        self.assertLessEqual(abs(count / total - probability), errors * standard_error + 1e-12, label)

    def test_first_token_frequencies(self):
        library = make_library("a:0", "b:0", "c:0")
        priors = PriorSet(library, [TokenSpecificPrior(library, [1.0, 2.0, 5.0])])
        sampler = Sampler(UniformPolicy(3), library, priors)
        total = 100000
        counts = Counter(r.sequence[0] for r in sampler.sample_batch(total, seed=7))
        for token, probability in enumerate([1 / 8, 2 / 8, 5 / 8]):
            self.assertWithinStandardErrors(counts[token], total, probability, library[token].symbol)

    def test_reference_positional_prior(self):
        library = make_library("+:2", "sin:1", "x:0", "y:0")
        reference = library.encode("+ x y")
        table = positional_table_from_reference(library, reference, 10.0)
        sampler = Sampler(UniformPolicy(4), library, PriorSet(library, [PositionalPrior(library, table)]))
        total = 100000
        records = sampler.sample_batch(total, seed=11)
        first = Counter(r.sequence[0] for r in records)
        for token in range(len(library)):
            probability = 10 / 13 if token == reference[0] else 1 / 13
            self.assertWithinStandardErrors(first[token], total, probability, library[token].symbol)
        self.assertGreater(first[reference[0]] / total, 0.25)

    def test_sequence_frequencies_match_enumeration(self):
        library = make_library("+:2", "sin:1", "x:0")
        policy = perturbed_policy(library, seed=3)
        priors = PriorSet(library, [SoftLengthPrior(library, 3, 2)])
        constraints = length_set(library, 5)
        sampler = Sampler(policy, library, priors, constraints)
        exact = sampler.enumerate_distribution()
        total = 100000
        counts = Counter(tuple(r.sequence) for r in sampler.sample_batch(total, seed=1))
        self.assertTrue(set(counts) <= exact.support)
        for sequence, probability in exact.items():
            if probability >= 0.01:
                self.assertWithinStandardErrors(counts[sequence], total, probability, str(sequence), errors=4)

    def test_samples_satisfy_every_constraint_kind(self):
        library = make_library("+:2", "*:2", "sin:1", "cos:1", "x:0", "y:0")
        trig = library.resolve(["@trig"])
        commutative = library.resolve(["@commutative"])
        cases = [
            LengthConstraint(library, 3, 8),
            RepeatConstraint(library, [library.position("x")], 0, 2),
            RelationalConstraint(library, trig, trig, "descendant"),
            BlacklistConstraint(library, [library.encode(s) for s in ("x", "y", "sin x")]),
            ValencyConstraint(library, {library.position("sin"): 3}),
            LexicographicalConstraint(library, commutative),
            SubtreeLengthConstraint(library, commutative),
            TypeUnitConstraint(library, positions={0: set(commutative)}),
        ]
        for constraint in cases:
            constraints = length_set(library, 8, constraint)
            sampler = Sampler(UniformPolicy(len(library)), library, constraints=constraints)
            for record in sampler.sample_batch(10000, seed=0):
                self.assertTrue(validate_sequence(record.sequence, constraints), constraint.name)

    def test_soft_length_prior_pulls_lengths_toward_target(self):
        library = default_sr_library(1)
        policy = UniformPolicy(len(library))
        plain = Sampler(policy, library, length_cap=40)
        shaped = Sampler(policy, library, PriorSet(library, [SoftLengthPrior(library, 10, 5)]), length_cap=40)
        plain_mean = np.mean([r.length for r in plain.sample_batch(10000, seed=0)])
        shaped_mean = np.mean([r.length for r in shaped.sample_batch(10000, seed=0)])
        self.assertLess(abs(shaped_mean - 10), abs(plain_mean - 10))
