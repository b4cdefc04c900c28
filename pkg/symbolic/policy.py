"""Autoregressive recurrent policy and its risk-seeking policy-gradient trainer.

The policy sees, for the next position, one-hots of the parent token and
of the left-sibling token (each with an extra "empty" slot) and emits one
logit per library token. Priors and constraints are added to these logits
outside the network, so gradients only ever flow through the policy's
own logits.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .conf import search_setting
from .exceptions import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

DTYPE = torch.float64
CHECKPOINT_FORMAT = 1


class RecurrentPolicy(nn.Module):
    def __init__(self, library_size, hidden_width=32, cell="gru"):
        super().__init__()
        if hidden_width < 1:
            raise ConfigError(f"hidden width must be at least 1, got {hidden_width}")
        self.library_size = library_size
        self.empty = library_size
        self.hidden_width = hidden_width
        self.cell_kind = cell
        input_width = 2 * (library_size + 1)
        if cell == "gru":
            self.cell = nn.GRUCell(input_width, hidden_width, dtype=DTYPE)
        elif cell == "rnn":
            self.cell = nn.RNNCell(input_width, hidden_width, nonlinearity="tanh", dtype=DTYPE)
        else:
            raise ConfigError(f"unknown recurrent cell {cell!r}; expected 'gru' or 'rnn'")
        self.output = nn.Linear(hidden_width, library_size, dtype=DTYPE)
        nn.init.zeros_(self.output.weight)
        nn.init.zeros_(self.output.bias)

    def initial_state(self, batch_size=1):
        return torch.zeros(batch_size, self.hidden_width, dtype=DTYPE)

    def encode(self, parents, siblings):
        parents = torch.as_tensor(parents, dtype=torch.long)
        siblings = torch.as_tensor(siblings, dtype=torch.long)
        width = self.library_size + 1
        return torch.cat(
            [
                nn.functional.one_hot(parents, width).to(DTYPE),
                nn.functional.one_hot(siblings, width).to(DTYPE),
            ],
            dim=-1,
        )

    def step(self, hidden, parents, siblings):
        """One recurrent step for a batch: returns (logits, hidden)."""
        hidden = self.cell(self.encode(parents, siblings), hidden)
        return self.output(hidden), hidden

    def forward_logits(self, hidden, observation):
        """Logits for a single observation ``(parent, sibling)``; ``None``
        stands for the empty marker."""
        parent, sibling = observation
        parent = self.empty if parent is None else parent
        sibling = self.empty if sibling is None else sibling
        if hidden is None:
            hidden = self.initial_state()
        with torch.no_grad():
            logits, hidden = self.step(hidden, [parent], [sibling])
        return logits[0].numpy(), hidden

    def batch_logits(self, hidden, parents, siblings):
        with torch.no_grad():
            logits, hidden = self.step(hidden, parents, siblings)
        return logits.numpy(), hidden

    def rollout(self, parents, siblings):
        """Logits at every step of padded observations of shape (B, T)."""
        batch, steps = parents.shape
        hidden = self.initial_state(batch)
        outputs = []
        for t in range(steps):
            logits, hidden = self.step(hidden, parents[:, t], siblings[:, t])
            outputs.append(logits)
        return torch.stack(outputs, dim=1)


class UniformPolicy:
    """Policy with all-zero logits: the untrained, zero-initialized policy
    without the cost of running a network. Used by oracle tools."""

    def __init__(self, library_size):
        self.library_size = library_size
        self.empty = library_size

    def initial_state(self, batch_size=1):
        return None

    def forward_logits(self, hidden, observation):
        return np.zeros(self.library_size), None

    def batch_logits(self, hidden, parents, siblings):
        return np.zeros((len(parents), self.library_size)), None


def init_policy(library, hidden_width=None, seed=0, cell=None):
    """Seeded policy whose first-step distribution is uniform."""
    hidden_width = hidden_width or search_setting("HIDDEN_WIDTH")
    cell = cell or search_setting("CELL")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return RecurrentPolicy(len(library), hidden_width, cell)


def save_checkpoint(policy, path, library):
    """Store parameters as flat float64 arrays in a portable ``.npz``."""
    arrays = {f"param:{name}": tensor.detach().numpy() for name, tensor in policy.state_dict().items()}
    np.savez(
        Path(path),
        format_version=np.array(CHECKPOINT_FORMAT),
        symbols=np.array(library.symbols),
        hidden_width=np.array(policy.hidden_width),
        cell=np.array(policy.cell_kind),
        **arrays,
    )


def load_checkpoint(path, library):
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT:
            raise ContractViolation(f"checkpoint format {version} is not supported")
        symbols = [str(s) for s in data["symbols"]]
        if symbols != library.symbols:
            raise ContractViolation(f"checkpoint library {symbols} does not match {library.symbols}")
        policy = RecurrentPolicy(len(library), int(data["hidden_width"]), str(data["cell"]))
        state = {
            key.split(":", 1)[1]: torch.from_numpy(data[key].copy())
            for key in data.files
            if key.startswith("param:")
        }
    policy.load_state_dict(state)
    return policy


@dataclass
class TrainerConfig:
    learning_rate: float = field(default_factory=lambda: search_setting("LEARNING_RATE"))
    batch_size: int = field(default_factory=lambda: search_setting("BATCH_SIZE"))
    risk_quantile: float = field(default_factory=lambda: search_setting("RISK_QUANTILE"))
    entropy_weight: float = field(default_factory=lambda: search_setting("ENTROPY_WEIGHT"))
    max_iterations: int = field(default_factory=lambda: search_setting("MAX_ITERATIONS"))

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.risk_quantile <= 1:
            raise ConfigError(f"risk_quantile must be in (0, 1], got {self.risk_quantile}")
        if self.entropy_weight < 0:
            raise ConfigError(f"entropy_weight must be >= 0, got {self.entropy_weight}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")


def _padded(records, library_size):
    steps = max(len(r.sequence) for r in records)
    batch = len(records)
    parents = np.full((batch, steps), library_size, dtype=np.int64)
    siblings = np.full((batch, steps), library_size, dtype=np.int64)
    tokens = np.zeros((batch, steps), dtype=np.int64)
    adjustments = np.zeros((batch, steps, library_size))
    valid = np.zeros((batch, steps))
    for b, record in enumerate(records):
        n = len(record.sequence)
        parents[b, :n] = record.parents
        siblings[b, :n] = record.siblings
        tokens[b, :n] = record.sequence
        adjustments[b, :n] = record.adjustments
        valid[b, :n] = 1.0
    return (
        torch.from_numpy(parents),
        torch.from_numpy(siblings),
        torch.from_numpy(tokens),
        torch.from_numpy(adjustments),
        torch.from_numpy(valid),
    )


def sequence_terms(policy, records):
    """Per-record log-likelihood and summed entropy, differentiable in theta.

    The recorded prior/constraint adjustments are added as constants.
    """
    parents, siblings, tokens, adjustments, valid = _padded(records, policy.library_size)
    logits = policy.rollout(parents, siblings)
    log_probs = torch.log_softmax(logits + adjustments, dim=-1)
    chosen = log_probs.gather(-1, tokens.unsqueeze(-1)).squeeze(-1)
    log_likelihood = (chosen * valid).sum(dim=1)
    masked = torch.isinf(adjustments)
    safe = log_probs.masked_fill(masked, 0.0)
    entropy = -(safe.exp().masked_fill(masked, 0.0) * safe).sum(dim=-1)
    return log_likelihood, (entropy * valid).sum(dim=1)


def risk_seeking_selection(rewards, risk_quantile):
    """Baseline is the (1 - eps) reward quantile; samples at or above it are kept."""
    rewards = np.asarray(rewards, dtype=np.float64)
    baseline = float(np.quantile(rewards, 1.0 - risk_quantile))
    keep = np.flatnonzero(rewards >= baseline)
    return baseline, keep


class Trainer:
    """Risk-seeking policy gradient with an entropy bonus, optimized by Adam."""

    def __init__(self, policy, config):
        self.policy = policy
        self.config = config
        self.optimizer = None
        if config.learning_rate > 0:
            self.optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)

    def surrogate_loss(self, records, rewards):
        if not records:
            raise ContractViolation("cannot train on an empty batch")
        rewards = np.asarray(rewards, dtype=np.float64)
        if not np.all(np.isfinite(rewards)):
            raise ContractViolation("rewards must be finite")
        baseline, keep = risk_seeking_selection(rewards, self.config.risk_quantile)
        kept = [records[i] for i in keep]
        log_likelihood, entropy = sequence_terms(self.policy, kept)
        advantage = torch.from_numpy(rewards[keep] - baseline)
        policy_term = (advantage * log_likelihood).mean()
        entropy_term = entropy.mean()
        loss = -policy_term - self.config.entropy_weight * entropy_term
        stats = {
            "baseline": baseline,
            "kept": len(kept),
            "mean_reward": float(rewards.mean()),
            "best_reward": float(rewards.max()),
            "entropy": float(entropy_term.detach()),
        }
        return loss, stats

    def train_step(self, records, rewards):
        loss, stats = self.surrogate_loss(records, rewards)
        stats["loss"] = float(loss.detach())
        if self.optimizer is not None:
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
        return self.policy, stats


def train_step(policy, records, rewards, config, trainer=None):
    """Functional form; pass a persistent ``trainer`` to keep Adam's moments."""
    trainer = trainer or Trainer(policy, config)
    return trainer.train_step(records, rewards)
