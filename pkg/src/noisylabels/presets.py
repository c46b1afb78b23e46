"""Named desk-scale experiment presets.

Each preset bundles a synthetic corpus, a split, and a noise process sized to
reproduce one qualitative regime:

* "separable": clean, disjoint class vocabularies; the sanity baseline.
* "yoruba_like": 7 classes, ~1340 training texts, moderately skewed classes,
  gazetteer-style rule noise around a third of the training set. Most errors
  sit next to strong gold evidence, so loss-based cleaning recovers well.
* "hausa_like": 5 classes, ~2045 training texts, rule noise around half the
  training set including one class whose errors outnumber its correct labels
  (the thief rule captures that class's own core words, which makes the
  errors self-consistent and hard to clean).

Rule labelers are built from the same class vocabularies as the corpus, the
way gazetteers are built from topic word lists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import Dataset, SplitSpec, generate_synthetic_corpus, split_dataset, \
    synthetic_class_vocabularies
from .errors import ValidationError
from .model import Featurizer, TrainConfig
from .noise import LabelRule, NoiseSpec, RuleLabeler, inject_annotation_noise, \
    inject_rule_noise, inject_uniform_noise

PRESET_NAMES = ("separable", "yoruba_like", "hausa_like")

# Desk-scale training defaults shared by the presets (the built-in model
# trains in hundreds of steps at learning rates far above transformer scale).
DESK_TRAIN = TrainConfig(steps=600, learning_rate=0.5, patience=8,
                         warmup_steps=0, weight_decay=1e-4, drop_rate=0.1,
                         batch_size=32, eval_every=25, seed=0, hidden_size=64)

DESK_FEATURIZER = Featurizer(hash_dim=4096, ngram_orders=(1, 2), hash_seed=0)


def core_vocabulary_rules(
    n_classes: int,
    vocab_per_class: int,
    overlap: float,
    core_size: int,
    theft: dict[int, tuple[int, int]] | None = None,
) -> RuleLabeler:
    """Gazetteer-style labeler over the synthetic class vocabularies.

    Rule c matches on a core subset of class c's private tokens plus the
    tokens it shares with class c+1, so texts of class c+1 that use shared
    vocabulary get pulled to label c (first match wins). theft maps a thief
    class to (victim class, token count): the thief's rule additionally
    claims that many of the victim's own non-shared tokens, which makes the
    victim's errors self-consistent rather than incidental.
    """
    vocabs = [list(v) for v in
              synthetic_class_vocabularies(n_classes, vocab_per_class, overlap)]
    sets = [set(v) for v in vocabs]
    zones = [sets[c] & sets[(c + 1) % n_classes] for c in range(n_classes)]

    def private(c: int) -> list[str]:
        return [t for t in vocabs[c]
                if t not in zones[c] and t not in zones[(c - 1) % n_classes]]

    rules = []
    for c in range(n_classes):
        keywords = set(private(c)[:core_size]) | zones[c]
        if theft and c in theft:
            victim, count = theft[c]
            keywords |= set(private(victim)[-count:])
        rules.append(LabelRule(frozenset(keywords), c))
    return RuleLabeler(tuple(rules), fallback="abstain")


@dataclass(frozen=True)
class Preset:
    """A reproducible experiment setting: corpus + splits + noise process."""

    name: str
    n_classes: int
    n_instances: int
    vocab_per_class: int
    overlap: float
    class_weights: tuple[float, ...] | None
    global_token_fraction: float
    labeler: RuleLabeler | None
    corpus_seed: int
    split: SplitSpec
    annotators_per_instance: int = 0
    annotator_disagreement: float = 0.35
    featurizer: Featurizer = DESK_FEATURIZER
    train_config: TrainConfig = DESK_TRAIN

    def clean_splits(self) -> tuple[Dataset, Dataset, Dataset]:
        corpus = generate_synthetic_corpus(
            self.n_classes, self.n_instances, self.vocab_per_class, self.overlap,
            seed=self.corpus_seed, class_weights=self.class_weights,
            global_token_fraction=self.global_token_fraction,
            annotators_per_instance=self.annotators_per_instance,
            annotator_disagreement=self.annotator_disagreement,
        )
        return split_dataset(corpus, self.split)

    def noisy_splits(self, noise: NoiseSpec | None = None,
                     noise_validation: bool = True
                     ) -> tuple[Dataset, Dataset, Dataset]:
        """Splits with noise applied to train (and by default validation);
        the test split always stays clean.

        noise=None applies the preset's own rule labeler when it has one.
        """
        train, val, test = self.clean_splits()
        if noise is None:
            if self.labeler is None:
                return train, val, test
            train = inject_rule_noise(train, self.labeler)
            if noise_validation:
                val = inject_rule_noise(val, self.labeler)
            return train, val, test
        train = self.apply_noise(train, noise)
        if noise_validation:
            val = self.apply_noise(val, noise, salt=1)
        return train, val, test

    def apply_noise(self, dataset: Dataset, noise: NoiseSpec,
                    salt: int = 0) -> Dataset:
        if noise.kind == "uniform_random":
            return inject_uniform_noise(dataset, noise.target_level,
                                        noise.seed + salt)
        if noise.kind == "pseudo_real_world":
            return inject_annotation_noise(dataset, noise.target_level,
                                           noise.seed + salt)
        if self.labeler is None:
            raise ValidationError(
                f"preset {self.name!r} has no rule labeler for "
                "feature-dependent noise")
        return inject_rule_noise(dataset, self.labeler)


def separable_preset(corpus_seed: int = 101) -> Preset:
    """5 balanced classes with disjoint vocabularies; trivially learnable."""
    return Preset(
        name="separable",
        n_classes=5,
        n_instances=2000,
        vocab_per_class=40,
        overlap=0.0,
        class_weights=None,
        global_token_fraction=0.0,
        labeler=None,
        corpus_seed=corpus_seed,
        split=SplitSpec(0.70, 0.10, 0.20, seed=corpus_seed),
        annotators_per_instance=3,
    )


def yoruba_like_preset(corpus_seed: int = 2024) -> Preset:
    """7 moderately skewed classes, ~1340 train texts, ~35% rule noise."""
    n_classes, vocab, overlap = 7, 60, 2 / 60
    return Preset(
        name="yoruba_like",
        n_classes=n_classes,
        n_instances=1908,
        vocab_per_class=vocab,
        overlap=overlap,
        class_weights=(0.7, 0.8, 0.9, 1.0, 1.1, 1.3, 1.6),
        global_token_fraction=0.06,
        labeler=core_vocabulary_rules(n_classes, vocab, overlap, core_size=18),
        corpus_seed=corpus_seed,
        split=SplitSpec(0.70, 0.10, 0.20, seed=corpus_seed),
    )


def hausa_like_preset(corpus_seed: int = 4477) -> Preset:
    """5 classes, ~2045 train texts, ~50% rule noise, one class whose rule
    errors outnumber its correct labels."""
    n_classes, vocab, overlap = 5, 60, 0.05
    return Preset(
        name="hausa_like",
        n_classes=n_classes,
        n_instances=2921,
        vocab_per_class=vocab,
        overlap=overlap,
        class_weights=(1.2, 1.0, 1.1, 0.95, 0.9),
        global_token_fraction=0.03,
        labeler=core_vocabulary_rules(n_classes, vocab, overlap, core_size=20,
                                      theft={0: (1, 9), 1: (2, 4)}),
        corpus_seed=corpus_seed,
        split=SplitSpec(0.70, 0.10, 0.20, seed=corpus_seed),
    )


def get_preset(name: str, corpus_seed: int | None = None) -> Preset:
    factories = {
        "separable": separable_preset,
        "yoruba_like": yoruba_like_preset,
        "hausa_like": hausa_like_preset,
    }
    if name not in factories:
        raise ValidationError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return factories[name]() if corpus_seed is None else factories[name](corpus_seed)
