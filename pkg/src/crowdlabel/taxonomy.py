"""Relation taxonomy: candidate sets per entity-type pair, super-clusters, refinements.

The canonical configuration ships as packaged JSON and describes a 42-label
relation scheme (41 positive labels plus NO_RELATION) over 27 subject-object
type pairs grouped into 8 super-clusters. Label refinement maps the original
namespace onto a 40-label scheme (39 positive plus NO_RELATION). Alternative
schemes can be loaded from a user-supplied file of the same shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

NO_RELATION = "NO_RELATION"
WRONG_TYPE = "WRONG_TYPE"

# Annotators choose from at most this many positive relations per screen.
MAX_SUBSET_SIZE = 9


class TaxonomyError(ValueError):
    """Raised when a taxonomy configuration violates a structural invariant."""


@dataclass(frozen=True)
class RelationLabel:
    name: str
    polarity: str  # "positive" or "negative"
    special: str = "none"  # "none" or "wrong_type"


@dataclass(frozen=True)
class SuperCluster:
    """A group of type pairs annotated together against a merged relation set."""

    name: str
    pairs: tuple[tuple[str, str], ...]
    # Refined positive relations, alphabetical; the union of the projected
    # per-pair candidate sets.
    merged_relations: tuple[str, ...]
    # Each stage offers one subset (plus NO_RELATION and WRONG_TYPE).
    subsets: tuple[tuple[str, ...], ...]

    @property
    def stage_count(self) -> int:
        return len(self.subsets)

    @property
    def merged_set(self) -> tuple[str, ...]:
        """Merged positive relations plus the two escape labels."""
        return self.merged_relations + (NO_RELATION, WRONG_TYPE)

    def stage_choices(self, stage: int) -> tuple[str, ...]:
        """Choices shown at ``stage`` (0-based): subset + the two escape labels."""
        return self.subsets[stage] + (NO_RELATION, WRONG_TYPE)


@dataclass(frozen=True)
class Taxonomy:
    original_labels: tuple[str, ...]
    refinement_map: Mapping[str, str]
    candidate_map: Mapping[tuple[str, str], tuple[str, ...]]
    clusters: tuple[SuperCluster, ...]
    definitions: Mapping[str, str]
    guidelines: Mapping[str, str]
    reconstructed: bool = False
    _cluster_by_pair: Mapping[tuple[str, str], SuperCluster] = field(
        repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        by_pair: dict[tuple[str, str], SuperCluster] = {}
        for cluster in self.clusters:
            for pair in cluster.pairs:
                by_pair[pair] = cluster
        object.__setattr__(self, "_cluster_by_pair", by_pair)

    @property
    def type_pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(self.candidate_map)

    @property
    def refined_labels(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.refinement_map.values())))

    def original_label_count(self) -> int:
        """Positive originals plus NO_RELATION."""
        return len(self.original_labels) + 1

    def refined_label_count(self) -> int:
        """Positive refined labels plus NO_RELATION."""
        return len(self.refined_labels) + 1

    def relation_labels(self) -> tuple[RelationLabel, ...]:
        positives = tuple(
            RelationLabel(name, "positive") for name in self.original_labels
        )
        return positives + (RelationLabel(NO_RELATION, "negative"),)

    def refine_label(self, label: str) -> str:
        if label == NO_RELATION:
            return NO_RELATION
        try:
            return self.refinement_map[label]
        except KeyError:
            raise TaxonomyError(f"unknown original label: {label!r}") from None

    def candidates(self, subj_type: str, obj_type: str) -> tuple[str, ...]:
        try:
            return self.candidate_map[(subj_type, obj_type)]
        except KeyError:
            raise TaxonomyError(
                f"no candidate set for type pair ({subj_type}, {obj_type})"
            ) from None

    def refined_candidates(self, subj_type: str, obj_type: str) -> tuple[str, ...]:
        refined = {self.refine_label(label) for label in self.candidates(subj_type, obj_type)}
        return tuple(sorted(refined))

    def super_cluster_of(self, subj_type: str, obj_type: str) -> SuperCluster:
        try:
            return self._cluster_by_pair[(subj_type, obj_type)]
        except KeyError:
            raise TaxonomyError(
                f"no super-cluster for type pair ({subj_type}, {obj_type})"
            ) from None

    def cluster_named(self, name: str) -> SuperCluster:
        for cluster in self.clusters:
            if cluster.name == name:
                return cluster
        raise TaxonomyError(f"unknown super-cluster: {name!r}")

    def definition(self, label: str) -> str:
        return self.definitions.get(label, "")

    def guideline(self, label: str) -> str:
        return self.guidelines.get(label, "")

    def to_config(self) -> dict:
        """Plain-data form; feeds taxonomy_from_config for exact round-trips."""
        return {
            "reconstructed": self.reconstructed,
            "original_labels": list(self.original_labels),
            "refinement_map": {k: self.refinement_map[k] for k in sorted(self.refinement_map)},
            "candidate_map": [
                {"subj_type": s, "obj_type": o, "relations": list(rels)}
                for (s, o), rels in self.candidate_map.items()
            ],
            "clusters": {
                cluster.name: [list(pair) for pair in cluster.pairs]
                for cluster in self.clusters
            },
            "definitions": {k: self.definitions[k] for k in sorted(self.definitions)},
            "guidelines": {k: self.guidelines[k] for k in sorted(self.guidelines)},
        }

    def cost_report(self) -> "CostReport":
        return CostReport(
            naive_worst_case_tasks=len(self.candidate_map),
            clustered_worst_case_tasks=len(self.clusters),
            reduction_factor=Fraction(len(self.candidate_map), len(self.clusters)),
            per_cluster_stage_counts={c.name: c.stage_count for c in self.clusters},
        )


@dataclass(frozen=True)
class CostReport:
    """Worst-case annotation-cost reduction from grouping type pairs.

    A wrong-typed sentence annotated naively may need one task per type pair;
    grouped, one task per cluster. The canonical scheme gives 27/8 = 3.375.
    """

    naive_worst_case_tasks: int
    clustered_worst_case_tasks: int
    reduction_factor: Fraction
    per_cluster_stage_counts: Mapping[str, int]

    def to_record(self) -> dict:
        return {
            "naive_worst_case_tasks": self.naive_worst_case_tasks,
            "clustered_worst_case_tasks": self.clustered_worst_case_tasks,
            "reduction_factor": float(self.reduction_factor),
            "per_cluster_stage_counts": dict(self.per_cluster_stage_counts),
        }


def partition_label_set(
    labels: Sequence[str], max_size: int = MAX_SUBSET_SIZE
) -> tuple[tuple[str, ...], ...]:
    """Split ``labels`` into ordered subsets of at most ``max_size``.

    Labels are sorted, then filled greedily, so every subset except possibly
    the last is full. An empty input yields no subsets.
    """
    if max_size < 1:
        raise ValueError("max_size must be positive")
    ordered = sorted(labels)
    if len(set(ordered)) != len(ordered):
        raise ValueError("duplicate labels in subset partition")
    return tuple(
        tuple(ordered[i : i + max_size]) for i in range(0, len(ordered), max_size)
    )


def _build_cluster(
    name: str,
    pairs: Sequence[tuple[str, str]],
    candidate_map: Mapping[tuple[str, str], tuple[str, ...]],
    refinement: Mapping[str, str],
    max_size: int,
) -> SuperCluster:
    merged: set[str] = set()
    for pair in pairs:
        merged.update(refinement[label] for label in candidate_map[pair])
    relations = tuple(sorted(merged))
    return SuperCluster(
        name=name,
        pairs=tuple(pairs),
        merged_relations=relations,
        subsets=partition_label_set(relations, max_size),
    )


def build_taxonomy(
    original_labels: Iterable[str],
    refinement_map: Mapping[str, str],
    candidate_map: Mapping[tuple[str, str], Sequence[str]],
    clusters: Mapping[str, Sequence[tuple[str, str]]],
    definitions: Mapping[str, str] | None = None,
    guidelines: Mapping[str, str] | None = None,
    reconstructed: bool = False,
    max_subset_size: int = MAX_SUBSET_SIZE,
) -> Taxonomy:
    """Assemble and validate a taxonomy from its parts.

    Raises TaxonomyError on structural violations: unknown labels in the
    candidate map, positive labels missing from every candidate set, clusters
    that fail to partition the type pairs, or reserved label names.
    """
    originals = tuple(sorted(set(original_labels)))
    for reserved in (NO_RELATION, WRONG_TYPE):
        if reserved in originals:
            raise TaxonomyError(f"{reserved} must not appear among positive labels")
    missing = set(originals) - set(refinement_map)
    if missing:
        raise TaxonomyError(f"labels missing from refinement map: {sorted(missing)}")
    extra = set(refinement_map) - set(originals)
    if extra:
        raise TaxonomyError(f"refinement map covers unknown labels: {sorted(extra)}")

    cmap: dict[tuple[str, str], tuple[str, ...]] = {}
    covered: set[str] = set()
    for pair, labels in candidate_map.items():
        labels = tuple(labels)
        if not labels:
            raise TaxonomyError(f"empty candidate set for {pair}")
        unknown = set(labels) - set(originals)
        if unknown:
            raise TaxonomyError(f"candidate set for {pair} has unknown labels: {sorted(unknown)}")
        if len(set(labels)) != len(labels):
            raise TaxonomyError(f"candidate set for {pair} has duplicates")
        cmap[pair] = labels
        covered.update(labels)
    uncovered = set(originals) - covered
    if uncovered:
        raise TaxonomyError(f"labels unreachable from any type pair: {sorted(uncovered)}")

    clustered_pairs = [pair for pairs in clusters.values() for pair in pairs]
    if len(clustered_pairs) != len(set(clustered_pairs)):
        raise TaxonomyError("a type pair appears in more than one super-cluster")
    if set(clustered_pairs) != set(cmap):
        raise TaxonomyError("super-clusters do not partition the candidate-map pairs")

    built = tuple(
        _build_cluster(name, pairs, cmap, refinement_map, max_subset_size)
        for name, pairs in clusters.items()
    )
    return Taxonomy(
        original_labels=originals,
        refinement_map=dict(refinement_map),
        candidate_map=cmap,
        clusters=built,
        definitions=dict(definitions or {}),
        guidelines=dict(guidelines or {}),
        reconstructed=reconstructed,
    )


def taxonomy_from_config(config: Mapping) -> Taxonomy:
    candidate_map = {
        (entry["subj_type"], entry["obj_type"]): tuple(entry["relations"])
        for entry in config["candidate_map"]
    }
    clusters = {
        name: [tuple(pair) for pair in pairs]
        for name, pairs in config["clusters"].items()
    }
    return build_taxonomy(
        original_labels=config["original_labels"],
        refinement_map=config["refinement_map"],
        candidate_map=candidate_map,
        clusters=clusters,
        definitions=config.get("definitions"),
        guidelines=config.get("guidelines"),
        reconstructed=bool(config.get("reconstructed", False)),
    )


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy config; ``None`` loads the packaged canonical scheme."""
    if path is None:
        text = (
            resources.files("crowdlabel.resources")
            .joinpath("taxonomy.json")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return taxonomy_from_config(json.loads(text))


def synthetic_taxonomy(
    label_count: int,
    pair: tuple[str, str] = ("PERSON", "THING"),
    cluster_name: str = "synthetic",
    max_subset_size: int = MAX_SUBSET_SIZE,
) -> Taxonomy:
    """A single-cluster taxonomy with ``label_count`` positive labels.

    Used by simulations and tests that need a cluster of a chosen size
    without committing to the canonical scheme.
    """
    if label_count < 1:
        raise ValueError("label_count must be positive")
    labels = [f"{pair[0]}:REL_{i:02d}" for i in range(label_count)]
    definitions = {label: f"Synthetic relation {label}." for label in labels}
    definitions[NO_RELATION] = "There is no relation between the subject and object entity."
    definitions[WRONG_TYPE] = (
        "The subject or object entity type shown for this sentence is "
        "incorrect, so none of the offered relations can apply."
    )
    return build_taxonomy(
        original_labels=labels,
        refinement_map={label: label for label in labels},
        candidate_map={pair: tuple(labels)},
        clusters={cluster_name: [pair]},
        definitions=definitions,
        max_subset_size=max_subset_size,
    )
