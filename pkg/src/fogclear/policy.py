"""Combat-timing rules and a square-law skirmish benchmark.

A policy looks at the frames of one game in order and decides, per frame,
whether to attack. The benchmark takes the first attack frame and settles the
game with :func:`skirmish_outcome` on that frame's clean state; a policy that
never attacks loses.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .dataio.samples import build_samples
from .dataio.synthetic import clean_replay, generate_synthetic_replay, upgrade_done
from .errors import InvalidArgument
from .gamestate import load_registry, side_values
from .learning.models import clf_predict
from .learning.train import ed_predict


@dataclass(frozen=True)
class RatioPolicyConfig:
    correction_coefficient: float = 1.5
    attack_ratio_threshold: float = 1.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if not (self.correction_coefficient > 0 and self.attack_ratio_threshold > 0 and self.epsilon > 0):
            raise InvalidArgument("ratio policy coefficient, threshold and epsilon must be positive")


@dataclass(frozen=True)
class ModelPolicyConfig:
    probability_threshold: float = 0.69
    require_upgrade: bool = True

    def __post_init__(self):
        if not 0 < self.probability_threshold < 1:
            raise InvalidArgument(f"probability_threshold must be in (0, 1), got {self.probability_threshold}")


@dataclass(frozen=True)
class PolicyDecision:
    attack: bool
    score: float
    reason: str


def ratio_decision(friendly_value, enemy_value, config=RatioPolicyConfig()):
    ratio = friendly_value / (config.correction_coefficient * enemy_value + config.epsilon)
    attack = ratio >= config.attack_ratio_threshold
    return PolicyDecision(bool(attack), float(ratio), "ratio>=threshold" if attack else "ratio<threshold")


def ratio_policy(noisy, table=None, config=RatioPolicyConfig()):
    """Attack when friendly value outweighs corrected visible enemy value.

    With no enemy in sight the ratio is ``friendly / epsilon`` and any army attacks.
    """
    table = table or load_registry()
    friendly, enemy = side_values(noisy, table)
    return ratio_decision(friendly, enemy, config)


def model_decision(p_win, upgrade, config=ModelPolicyConfig()):
    if config.require_upgrade and not upgrade:
        return PolicyDecision(False, float(p_win), "awaiting upgrade")
    attack = p_win > config.probability_threshold
    return PolicyDecision(bool(attack), float(p_win), "p>threshold" if attack else "p<=threshold")


def model_policy(noisy, ed_params, clf_params, upgrade, config=ModelPolicyConfig()):
    """Attack when the classifier, fed the estimated full map, gives A a win
    probability above the threshold (and the upgrade gate is satisfied)."""
    if ed_params is None or clf_params is None:
        raise InvalidArgument("model_policy needs both encoder-decoder and classifier parameters")
    retrieved = ed_predict(ed_params, np.asarray(noisy)[None])
    p = float(clf_predict(clf_params, retrieved[0])[0])
    return model_decision(p, upgrade, config)


def square_law_probability(value_a, value_b):
    """``V_A^2 / (V_A^2 + V_B^2)``; 0.5 when both sides are empty."""
    if value_a < 0 or value_b < 0:
        raise InvalidArgument("combat values must be non-negative")
    denom = value_a ** 2 + value_b ** 2
    return 0.5 if denom == 0 else value_a ** 2 / denom


def oracle_decision(clean, table=None):
    table = table or load_registry()
    p = square_law_probability(*side_values(clean, table))
    return PolicyDecision(p > 0.5, p, "P(A)>0.5" if p > 0.5 else "P(A)<=0.5")


def skirmish_outcome(clean, table=None, seed=0):
    """Winner ("A" or "B") of an abstract engagement on a clean map.

    One uniform draw from ``default_rng(seed)`` against the square-law probability.
    """
    table = table or load_registry()
    p = square_law_probability(*side_values(clean, table))
    return "A" if np.random.default_rng(seed).random() < p else "B"


# --- policies as frame-sequence deciders --------------------------------------


class RatioPolicy:
    def __init__(self, table=None, config=RatioPolicyConfig(), name="ratio"):
        self.table = table or load_registry()
        self.config = config
        self.name = name

    def decide(self, noisy, clean, upgrades):
        return np.array([ratio_policy(m, self.table, self.config).attack for m in noisy], bool)


class ModelPolicy:
    """Batched :func:`model_policy`: only frames that pass the upgrade gate are scored."""

    def __init__(self, ed_params, clf_params, config=ModelPolicyConfig(), name="model"):
        if ed_params is None or clf_params is None:
            raise InvalidArgument("model policy needs both encoder-decoder and classifier parameters")
        self.ed, self.clf, self.config, self.name = ed_params, clf_params, config, name

    def probabilities(self, noisy):
        return clf_predict(self.clf, ed_predict(self.ed, np.asarray(noisy)))[:, 0]

    def decide(self, noisy, clean, upgrades):
        upgrades = np.asarray(upgrades, bool)
        attack = np.zeros(len(noisy), bool)
        eligible = upgrades if self.config.require_upgrade else np.ones(len(noisy), bool)
        if eligible.any():
            attack[eligible] = self.probabilities(noisy[eligible]) > self.config.probability_threshold
        return attack


class OraclePolicy:
    def __init__(self, table=None, name="oracle"):
        self.table = table or load_registry()
        self.name = name

    def decide(self, noisy, clean, upgrades):
        return np.array([oracle_decision(m, self.table).attack for m in clean], bool)


@dataclass
class PolicyResult:
    name: str
    outcomes: list = field(default_factory=list)  # True when A won the trial
    attack_frames: list = field(default_factory=list)  # None when the policy never attacked

    @property
    def trials(self):
        return len(self.outcomes)

    @property
    def wins(self):
        return int(sum(self.outcomes))

    @property
    def win_rate(self):
        return self.wins / self.trials

    def confidence_interval(self, level=0.95):
        """Wilson score interval for the win rate."""
        ci = binomtest(self.wins, self.trials).proportion_ci(confidence_level=level, method="wilson")
        return float(ci.low), float(ci.high)


def trial_seed(config, trial):
    """Skirmish seed shared by every policy in one trial."""
    return [config.seed, 0x5EED, trial]


def run_policy_benchmark(policies, config, trials, table=None):
    """Play ``trials`` synthetic games (replay indices ``0..trials-1``) per policy.

    All policies see the same games and share each game's skirmish seed.
    Returns ``{name: PolicyResult}`` in the order given.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise InvalidArgument(f"policy names must be unique, got {names}")
    table = table or load_registry()
    results = {p.name: PolicyResult(p.name) for p in policies}
    for trial in range(trials):
        frames = clean_replay(generate_synthetic_replay(config, trial, table), config)
        samples = build_samples(frames, table)
        upgrades = np.array([upgrade_done(config, f.t_seconds) for f in frames], bool)
        seed = trial_seed(config, trial)
        for policy in policies:
            attack = policy.decide(samples.x, samples.y, upgrades)
            res = results[policy.name]
            if attack.any():
                k = int(np.argmax(attack))
                res.outcomes.append(skirmish_outcome(samples.y[k], table, seed) == "A")
                res.attack_frames.append(k)
            else:
                res.outcomes.append(False)
                res.attack_frames.append(None)
    return results


def benchmark_csv(results):
    """``policy,trials,wins,win_rate,ci_low,ci_high`` rows as UTF-8 text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["policy", "trials", "wins", "win_rate", "ci_low", "ci_high"])
    for res in results.values():
        lo, hi = res.confidence_interval()
        writer.writerow([res.name, res.trials, res.wins, f"{res.win_rate:.6f}", f"{lo:.6f}", f"{hi:.6f}"])
    return buf.getvalue()
