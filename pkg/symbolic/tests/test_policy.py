import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase, tag

from symbolic.constraints import ConstraintSet, LengthConstraint, RelationalConstraint, RepeatConstraint
from symbolic.exceptions import ConfigError, ContractViolation
from symbolic.policy import (
    Trainer,
    TrainerConfig,
    init_policy,
    load_checkpoint,
    risk_seeking_selection,
    save_checkpoint,
    train_step,
)
from symbolic.priors import PriorSet, TokenSpecificPrior, UniformArityPrior
from symbolic.sampler import Sampler, adjusted_distribution

from .helpers import make_library
from .test_sampler import perturbed_policy


def trainer_config(**overrides):
    values = dict(learning_rate=0.0, batch_size=8, risk_quantile=0.5, entropy_weight=0.01, max_iterations=1)
    values.update(overrides)
    return TrainerConfig(**values)


class PolicyTests(SimpleTestCase):
    def setUp(self):
        self.library = make_library("+:2", "sin:1", "x:0", "y:0")

    def test_first_step_is_uniform(self):
        policy = init_policy(self.library, hidden_width=8, seed=5)
        logits, _ = policy.forward_logits(None, (None, None))
        probs, _ = adjusted_distribution(logits, np.zeros(len(self.library)))
        np.testing.assert_allclose(probs, 0.25, rtol=0, atol=1e-15)

    def test_uniform_arity_prior_on_fresh_policy(self):
        policy = init_policy(self.library, hidden_width=8, seed=5)
        logits, _ = policy.forward_logits(None, (None, None))
        adjustment = UniformArityPrior(self.library).adjustment(None).values
        probs, _ = adjusted_distribution(logits, adjustment)
        for arity in (0, 1, 2):
            self.assertAlmostEqual(probs[self.library.arities == arity].sum(), 1 / 3, delta=1e-12)

    def test_same_seed_same_parameters(self):
        first = init_policy(self.library, hidden_width=8, seed=1).state_dict()
        second = init_policy(self.library, hidden_width=8, seed=1).state_dict()
        for name, tensor in first.items():
            self.assertTrue(torch.equal(tensor, second[name]), name)

    def test_output_bias_moves_one_logit(self):
        policy = perturbed_policy(self.library)
        before, _ = policy.forward_logits(None, (None, None))
        with torch.no_grad():
            policy.output.bias[2] += 0.25
        after, _ = policy.forward_logits(None, (None, None))
        np.testing.assert_allclose(after - before, [0.0, 0.0, 0.25, 0.0], atol=1e-12)

    def test_unknown_cell(self):
        with self.assertRaises(ConfigError):
            init_policy(self.library, hidden_width=8, cell="lstm")

    def test_rnn_cell(self):
        policy = init_policy(self.library, hidden_width=4, cell="rnn")
        logits, hidden = policy.forward_logits(None, (None, None))
        self.assertEqual(logits.shape, (4,))
        self.assertEqual(tuple(hidden.shape), (1, 4))

    def test_checkpoint_round_trip(self):
        policy = perturbed_policy(self.library)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "policy.npz"
            save_checkpoint(policy, path, self.library)
            restored = load_checkpoint(path, self.library)
            with self.assertRaises(ContractViolation):
                load_checkpoint(path, make_library("+:2", "x:0"))
        hidden = restored.initial_state()
        expected_hidden = policy.initial_state()
        for observation in [(None, None), (0, None), (0, 2)]:
            expected, expected_hidden = policy.forward_logits(expected_hidden, observation)
            logits, hidden = restored.forward_logits(hidden, observation)
            np.testing.assert_array_equal(logits, expected)


class RiskSeekingTests(SimpleTestCase):
    def test_selection(self):
        rewards = np.arange(10, dtype=float)
        baseline, keep = risk_seeking_selection(rewards, 0.2)
        self.assertAlmostEqual(baseline, 7.2)
        self.assertEqual(keep.tolist(), [8, 9])

    def test_whole_batch(self):
        baseline, keep = risk_seeking_selection([3.0, 1.0, 2.0], 1.0)
        self.assertEqual(baseline, 1.0)
        self.assertEqual(sorted(keep.tolist()), [0, 1, 2])

    def test_bad_config(self):
        for values in ({"risk_quantile": 0.0}, {"risk_quantile": 1.5}, {"learning_rate": -1.0}, {"batch_size": 0}):
            with self.assertRaises(ConfigError, msg=str(values)):
                trainer_config(**values)


class GradientTests(SimpleTestCase):
    def setUp(self):
        self.library = make_library("+:2", "sin:1", "x:0", "y:0")
        self.policy = perturbed_policy(self.library, seed=2, scale=0.5)
        constraints = ConstraintSet(self.library, [
            LengthConstraint(self.library, 1, 6),
            RelationalConstraint(self.library, [1], [1], "child"),
            RepeatConstraint(self.library, [3], 0, 0),
        ])
        priors = PriorSet(self.library, [TokenSpecificPrior(self.library, [0.5, 1.5, 1.0, 2.0])])
        self.sampler = Sampler(self.policy, self.library, priors, constraints)
        self.records = self.sampler.sample_batch(12, seed=9)
        self.rewards = np.random.default_rng(4).uniform(0, 1, len(self.records))

    def loss(self, trainer):
        loss, _ = trainer.surrogate_loss(self.records, self.rewards)
        return loss

    def test_gradient_matches_finite_differences(self):
        trainer = Trainer(self.policy, trainer_config())
        self.policy.zero_grad()
        self.loss(trainer).backward()
        rng = np.random.default_rng(0)
        analytic, numeric = [], []
        step = 1e-5
        for parameter in self.policy.parameters():
            flat = parameter.data.view(-1)
            grad = parameter.grad.view(-1)
            for index in rng.choice(flat.numel(), size=min(6, flat.numel()), replace=False).tolist():
                original = flat[index].item()
                with torch.no_grad():
                    flat[index] = original + step
                    upper = self.loss(trainer).item()
                    flat[index] = original - step
                    lower = self.loss(trainer).item()
                    flat[index] = original
                analytic.append(grad[index].item())
                numeric.append((upper - lower) / (2 * step))
        analytic, numeric = np.array(analytic), np.array(numeric)
        error = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        self.assertLess(error, 1e-4)
        self.assertGreater(np.linalg.norm(analytic), 0.0)

    def test_always_masked_token_gets_no_gradient(self):
        trainer = Trainer(self.policy, trainer_config())
        self.policy.zero_grad()
        self.loss(trainer).backward()
        y = self.library.position("y")
        self.assertEqual(self.policy.output.bias.grad[y].item(), 0.0)
        self.assertFalse(torch.any(self.policy.output.weight.grad[y] != 0))
        self.assertTrue(torch.all(torch.isfinite(self.policy.output.weight.grad)))

    def test_constant_rewards_give_no_policy_gradient(self):
        trainer = Trainer(self.policy, trainer_config(entropy_weight=0.0, risk_quantile=0.3))
        self.policy.zero_grad()
        loss, stats = trainer.surrogate_loss(self.records, np.full(len(self.records), 0.7))
        loss.backward()
        self.assertEqual(stats["kept"], len(self.records))
        for name, parameter in self.policy.named_parameters():
            self.assertEqual(torch.count_nonzero(parameter.grad).item(), 0, name)

    def test_zero_learning_rate_leaves_parameters_untouched(self):
        before = {name: tensor.clone() for name, tensor in self.policy.state_dict().items()}
        policy, stats = train_step(self.policy, self.records, self.rewards, trainer_config())
        for name, tensor in policy.state_dict().items():
            self.assertTrue(torch.equal(tensor, before[name]), name)
        self.assertIn("loss", stats)

    def test_positive_learning_rate_updates(self):
        trainer = Trainer(self.policy, trainer_config(learning_rate=0.01))
        before = self.policy.output.bias.detach().clone()
        trainer.train_step(self.records, self.rewards)
        self.assertFalse(torch.equal(before, self.policy.output.bias.detach()))

    def test_rejects_bad_batches(self):
        trainer = Trainer(self.policy, trainer_config())
        with self.assertRaises(ContractViolation):
            trainer.surrogate_loss([], [])
        with self.assertRaises(ContractViolation):
            trainer.surrogate_loss(self.records, np.full(len(self.records), np.nan))


@tag("slow")
class BanditTests(SimpleTestCase):
    def test_learns_to_include_the_rewarded_token(self):
        library = make_library("+:2", "a:0", "b:0")
        a = library.position("a")
        policy = init_policy(library, hidden_width=8, seed=0)
        config = trainer_config(learning_rate=0.05, batch_size=100, risk_quantile=1.0, entropy_weight=0.0,
                                max_iterations=200)
        trainer = Trainer(policy, config)
        sampler = Sampler(policy, library, constraints=ConstraintSet(library, [LengthConstraint(library, 1, 3)]))

        def probability_of_a():
            distribution = sampler.enumerate_distribution()
            return sum(p for sequence, p in distribution.items() if a in sequence)

        self.assertLess(probability_of_a(), 0.6)
        for iteration in range(1, config.max_iterations + 1):
            records = sampler.sample_batch(config.batch_size, seed=0, iteration=iteration)
            rewards = np.array([1.0 if a in r.sequence else 0.0 for r in records])
            trainer.train_step(records, rewards)
            if iteration % 10 == 0 and probability_of_a() > 0.95:
                break
        self.assertGreater(probability_of_a(), 0.95)
