"""Region scoring, confidence reduction, greedy search, and the exhaustive oracle.

The greedy search masks cumulative prefixes of the attribution-sorted region
order until the classifier's decision flips with enough confidence; the
brute-force oracle enumerates subsets by increasing cardinality and bounds
the greedy depth from below in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import CseError, NotFlaggedUnsafeError, ShapeMismatchError
from .obfuscation import MaskOp, apply_mask, mask_for_regions
from .segmentation import num_regions


@dataclass
class RegionScore:
    region_id: int
    score: float        # mean attribution over the region
    pixel_count: int


@dataclass
class CounterfactualResult:
    masked_region_ids: list
    depth: int
    original_class: int
    original_score: float
    final_class: int
    final_score: float
    obfuscation_fraction: float
    success: bool
    region_order: list
    step_records: list = field(default_factory=list)  # per step: {region, prob_drop, flipped}
    masked_image: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "masked_region_ids": [int(r) for r in self.masked_region_ids],
            "depth": self.depth,
            "original_class": self.original_class,
            "original_score": round(self.original_score, 6),
            "final_class": self.final_class,
            "final_score": round(self.final_score, 6),
            "obfuscation_fraction": round(self.obfuscation_fraction, 6),
            "success": self.success,
            "region_order": [int(r) for r in self.region_order],
            "steps": self.step_records,
        }


def region_scores(attr_values: np.ndarray, labels: np.ndarray) -> list:
    """Mean attribution per region (Definition-style average, exact arithmetic mean)."""
    if attr_values.shape != labels.shape:
        raise ShapeMismatchError(f"map {attr_values.shape} vs labels {labels.shape}")
    k = num_regions(labels)
    flat_labels = labels.reshape(-1)
    sums = np.bincount(flat_labels, weights=attr_values.reshape(-1).astype(np.float64),
                       minlength=k)
    counts = np.bincount(flat_labels, minlength=k)
    return [RegionScore(region_id=j, score=float(sums[j] / counts[j]),
                        pixel_count=int(counts[j])) for j in range(k)]


def score_order(scores) -> list:
    """Region ids sorted by descending score; ties: smaller region, then lower id."""
    return [s.region_id for s in
            sorted(scores, key=lambda s: (-s.score, s.pixel_count, s.region_id))]


def _classify(model, image_hw3):
    x = np.transpose(image_hw3, (2, 0, 1)).astype(np.float32)
    logits = engine.forward(model, x).logits
    probs = engine.softmax(logits)
    return int(np.argmax(logits)), probs


def confidence_reduction(model, image: np.ndarray, labels: np.ndarray, region_id: int,
                         mask_op: MaskOp):
    """(original-class probability drop, flipped flag) for masking one region.

    The drop is only a well-defined confidence reduction when flipped is
    false; when masking alone flips the class the raw delta is still returned
    alongside flipped=True.
    """
    orig_class, orig_probs = _classify(model, image)
    masked = apply_mask(image, mask_for_regions(labels, [region_id]), mask_op,
                        model.channel_means)
    new_class, new_probs = _classify(model, masked)
    return float(orig_probs[orig_class] - new_probs[orig_class]), new_class != orig_class


def greedy_counterfactual(model, image: np.ndarray, labels: np.ndarray, scores=None,
                          T: float = 0.5, budget: int = 10, mask_op: MaskOp = None,
                          rerank_by_cr: bool = False,
                          require_unsafe: bool = True,
                          region_order: list = None) -> CounterfactualResult:
    """Mask cumulative prefixes of the score-descending region order until the
    class flips with softmax above T, up to the depth budget.

    With rerank_by_cr, after each unsuccessful step the remaining regions are
    re-sorted by their measured confidence reduction on top of the current
    prefix.  region_order overrides the attribution order (used by the
    random-order ablation); it must enumerate region ids.
    """
    if mask_op is None:
        mask_op = MaskOp("fill-channel-means")
    if labels.shape != image.shape[:2]:
        raise ShapeMismatchError(f"labels {labels.shape} vs image {image.shape[:2]}")
    orig_class, orig_probs = _classify(model, image)
    if require_unsafe and orig_class != engine.UNSAFE_CLASS:
        raise NotFlaggedUnsafeError(
            f"image is classified {engine.CLASS_NAMES[orig_class]!r}; nothing to flip")

    if region_order is None and scores is None:
        raise CseError("need region scores or an explicit region order")
    order = list(region_order) if region_order is not None else score_order(scores)
    if sorted(order) != list(range(num_regions(labels))):
        raise CseError("region order must enumerate every region id exactly once")

    total_pixels = labels.size
    selected = []
    remaining = list(order)
    steps = []
    final_class, final_probs = orig_class, orig_probs
    masked = image
    success = False

    for _ in range(min(budget, len(order))):
        region = remaining.pop(0)
        selected.append(region)
        union = mask_for_regions(labels, selected)
        masked = apply_mask(image, union, mask_op, model.channel_means)
        final_class, final_probs = _classify(model, masked)
        steps.append({
            "region": int(region),
            "prob_drop": round(float(orig_probs[orig_class] - final_probs[orig_class]), 6),
            "flipped": final_class != orig_class,
        })
        if final_class != orig_class and final_probs[final_class] > T:
            success = True
            break
        if rerank_by_cr and remaining:
            drops = []
            for r in remaining:
                trial = apply_mask(image, mask_for_regions(labels, selected + [r]),
                                   mask_op, model.channel_means)
                _, probs = _classify(model, trial)
                drops.append(float(orig_probs[orig_class] - probs[orig_class]))
            remaining = [r for _, r in
                         sorted(zip(drops, remaining), key=lambda t: (-t[0], t[1]))]

    depth = len(selected) if success else min(budget, len(order))
    fraction = float(mask_for_regions(labels, selected).sum()) / total_pixels
    return CounterfactualResult(
        masked_region_ids=selected, depth=depth,
        original_class=orig_class, original_score=float(orig_probs[orig_class]),
        final_class=final_class, final_score=float(final_probs[final_class]),
        obfuscation_fraction=fraction, success=success,
        region_order=order, step_records=steps, masked_image=masked,
    )


def brute_force_counterfactual(model, image: np.ndarray, labels: np.ndarray,
                               T: float = 0.5, max_cardinality: int = 10,
                               mask_op: MaskOp = None):
    """Minimum-cardinality flipping subset by exhaustive enumeration, or None.

    Enumerates subsets in increasing cardinality, lexicographic within each
    cardinality, so ties resolve deterministically.  Guarded to K <= 16.
    """
    if mask_op is None:
        mask_op = MaskOp("fill-channel-means")
    k = num_regions(labels)
    if k > 16:
        raise CseError(f"brute-force oracle refuses K={k} > 16 regions")
    orig_class, _ = _classify(model, image)
    for cardinality in range(1, min(max_cardinality, k) + 1):
        for subset in itertools.combinations(range(k), cardinality):
            masked = apply_mask(image, mask_for_regions(labels, subset), mask_op,
                                model.channel_means)
            new_class, probs = _classify(model, masked)
            if new_class != orig_class and probs[new_class] > T:
                return list(subset)
    return None
