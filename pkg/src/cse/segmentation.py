"""Partition an image into disjoint subobject regions.

Three segmenters share the LabelMap contract (H x W int array, labels
0..K-1, every region nonempty): a uniform grid, SLIC, and a Bayesian
adaptive GMM over per-pixel (location, color) features fit by Gibbs
sampling with NIW/Dirichlet conjugate updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.linalg import solve_triangular
from scipy.stats import invwishart
from skimage.segmentation import slic as _skimage_slic

from .errors import CseError

FEATURE_DIM = 5
COV_JITTER = 1e-6          # added to covariances before Cholesky
MIN_COMPONENT_FRACTION = 0.0025  # connected components below this are merged away


def num_regions(labels: np.ndarray) -> int:
    return int(labels.max()) + 1


def grid_segment(image: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Rectangular grid partition; remainder rows/columns go to the last strips."""
    h, w = image.shape[:2]
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise CseError(f"grid needs at least 2 cells, got {rows}x{cols}")
    if rows > h or cols > w:
        raise CseError(f"grid {rows}x{cols} exceeds image {h}x{w}")
    row_ids = _strip_ids(h, rows)
    col_ids = _strip_ids(w, cols)
    return (row_ids[:, None] * cols + col_ids[None, :]).astype(np.int32)


def _strip_ids(n: int, k: int) -> np.ndarray:
    base, rem = divmod(n, k)
    sizes = [base] * (k - rem) + [base + 1] * rem
    return np.repeat(np.arange(k), sizes)


def slic_segment(image: np.ndarray, n_segments: int = 25, compactness: float = 1.0,
                 seed: int = 0, iterations: int = 10) -> np.ndarray:
    """SLIC superpixels (k-means in (location, color) space); K may fall below n_segments."""
    h, w = image.shape[:2]
    if n_segments < 2:
        raise CseError("slic needs n_segments >= 2")
    if n_segments > h * w:
        raise CseError(f"n_segments={n_segments} exceeds pixel count {h * w}")
    if compactness <= 0:
        raise CseError("compactness must be positive")
    labels = _skimage_slic(image.astype(np.float64), n_segments=n_segments,
                           compactness=compactness, max_num_iter=iterations,
                           start_label=0, enforce_connectivity=True, channel_axis=-1)
    return _relabel_consecutive(labels)


@dataclass
class NiwParams:
    """Normal-Inverse-Wishart hyperparameters over (mean, covariance) in R^5."""
    mean: np.ndarray      # (5,)
    kappa: float
    dof: float            # must exceed dim + 1 for the covariance mean to exist
    scale: np.ndarray     # (5,5)

    @staticmethod
    def from_features(features: np.ndarray) -> "NiwParams":
        cov_diag = np.diag(np.var(features, axis=0))
        return NiwParams(mean=features.mean(axis=0), kappa=0.1, dof=10.0,
                         scale=0.1 * cov_diag + COV_JITTER * np.eye(FEATURE_DIM))


@dataclass
class GmmState:
    means: np.ndarray        # (K,5)
    covs: np.ndarray         # (K,5,5)
    weights: np.ndarray      # (K,) convex combination
    assignments: np.ndarray  # (N,) component per feature
    niw: NiwParams
    alpha: float


def pixel_features(image: np.ndarray, spatial_weight: float = 1.0) -> np.ndarray:
    """Per-pixel (x, y, r, g, b) features, locations scaled to [0,1]."""
    h, w = image.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xs /= max(w - 1, 1)
    ys /= max(h - 1, 1)
    feats = np.stack([xs * spatial_weight, ys * spatial_weight,
                      image[..., 0], image[..., 1], image[..., 2]], axis=-1)
    return feats.reshape(-1, FEATURE_DIM)


def _sample_niw_posterior(feats_j: np.ndarray, niw: NiwParams, rng: np.random.Generator):
    """Draw (mu, Sigma) from the NIW conditional posterior for one component."""
    n = len(feats_j)
    if n == 0:
        kappa_n, nu_n, m_n, psi_n = niw.kappa, niw.dof, niw.mean, niw.scale
    else:
        xbar = feats_j.mean(axis=0)
        diff = feats_j - xbar
        scatter = diff.T @ diff
        kappa_n = niw.kappa + n
        nu_n = niw.dof + n
        m_n = (niw.kappa * niw.mean + n * xbar) / kappa_n
        dm = (xbar - niw.mean)[:, None]
        psi_n = niw.scale + scatter + (niw.kappa * n / kappa_n) * (dm @ dm.T)
    psi_n = 0.5 * (psi_n + psi_n.T) + COV_JITTER * np.eye(FEATURE_DIM)
    sigma = invwishart.rvs(df=nu_n, scale=psi_n, random_state=rng)
    sigma = 0.5 * (sigma + sigma.T) + COV_JITTER * np.eye(FEATURE_DIM)
    mu = m_n + np.linalg.cholesky(sigma / kappa_n) @ rng.standard_normal(FEATURE_DIM)
    return mu, sigma


def _log_gaussian(features: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(sigma + COV_JITTER * np.eye(FEATURE_DIM))
    solved = solve_triangular(chol, (features - mu).T, lower=True)
    maha = np.sum(solved**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + logdet + FEATURE_DIM * np.log(2.0 * np.pi))


def gibbs_sweep(state: GmmState, features: np.ndarray, rng: np.random.Generator) -> GmmState:
    """One alternation: resample (theta_j, lambda_j) given Z, then Z given parameters."""
    k = len(state.weights)
    counts = np.bincount(state.assignments, minlength=k).astype(np.float64)
    weights = rng.dirichlet(state.alpha + counts)

    means = np.empty((k, FEATURE_DIM))
    covs = np.empty((k, FEATURE_DIM, FEATURE_DIM))
    for j in range(k):
        means[j], covs[j] = _sample_niw_posterior(features[state.assignments == j],
                                                  state.niw, rng)

    logp = np.empty((len(features), k))
    for j in range(k):
        logp[:, j] = np.log(weights[j] + 1e-300) + _log_gaussian(features, means[j], covs[j])
    gumbel = -np.log(-np.log(rng.random(logp.shape)))
    assignments = np.argmax(logp + gumbel, axis=1).astype(np.int32)

    return GmmState(means=means, covs=covs, weights=weights,
                    assignments=assignments, niw=state.niw, alpha=state.alpha)


def _init_assignments(h: int, w: int, k: int) -> np.ndarray:
    """Spatial grid initialization so components start localized."""
    rows = max(1, int(np.sqrt(k)))
    cols = int(np.ceil(k / rows))
    dummy = np.zeros((h, w, 3))
    return (grid_segment(dummy, rows, cols) % k).reshape(-1).astype(np.int32)


def bass_segment(image: np.ndarray, init_components: int = 8, alpha: float = 1.0,
                 niw: NiwParams = None, gibbs_sweeps: int = 100, seed: int = 0,
                 spatial_weight: float = 1.0) -> np.ndarray:
    """Bayesian adaptive GMM superpixels; K adapts as components empty out."""
    if init_components < 2:
        raise CseError("need at least 2 initial components")
    if gibbs_sweeps < 1:
        raise CseError("need at least 1 Gibbs sweep")
    h, w = image.shape[:2]
    rng = np.random.default_rng(seed)
    features = pixel_features(image, spatial_weight)
    if niw is None:
        niw = NiwParams.from_features(features)
    state = GmmState(
        means=np.zeros((init_components, FEATURE_DIM)),
        covs=np.tile(np.eye(FEATURE_DIM), (init_components, 1, 1)),
        weights=np.full(init_components, 1.0 / init_components),
        assignments=_init_assignments(h, w, init_components),
        niw=niw, alpha=alpha,
    )
    for _ in range(gibbs_sweeps):
        state = gibbs_sweep(state, features, rng)

    # final hard labeling is the posterior mode, not a sampled draw, so the
    # emitted partition is free of single-sweep sampling noise
    k = len(state.weights)
    logp = np.empty((len(features), k))
    for j in range(k):
        logp[:, j] = (np.log(state.weights[j] + 1e-300)
                      + _log_gaussian(features, state.means[j], state.covs[j]))
    labels = _relabel_consecutive(np.argmax(logp, axis=1).reshape(h, w))
    # connectivity cleanup must not inflate K past the surviving component count:
    # each mixture component is one subobject
    return enforce_connectivity(labels, max_regions=num_regions(labels))


def _relabel_consecutive(labels: np.ndarray) -> np.ndarray:
    _, flat = np.unique(labels, return_inverse=True)
    return flat.reshape(labels.shape).astype(np.int32)


def enforce_connectivity(labels: np.ndarray, max_regions: int = None) -> np.ndarray:
    """Split labels into 4-connected components, then absorb tiny components
    into their largest 4-neighbor; with max_regions set, keep merging the
    smallest component until at most that many regions remain."""
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int32)
    nxt = 0
    for lab in np.unique(labels):
        cc, n = ndimage.label(labels == lab)
        for i in range(1, n + 1):
            comp[cc == i] = nxt
            nxt += 1

    min_size = max(1, int(np.ceil(MIN_COMPONENT_FRACTION * h * w)))
    while True:
        sizes = np.bincount(comp.reshape(-1))
        if len(sizes) <= 1:
            break
        small = [c for c in np.argsort(sizes, kind="stable") if sizes[c] < min_size]
        if small:
            target = int(small[0])
        elif max_regions is not None and len(sizes) > max_regions:
            target = int(np.argsort(sizes, kind="stable")[0])
        else:
            break
        neigh = _neighbor_counts(comp, target)
        if not neigh:
            break
        best = max(neigh, key=lambda c: (sizes[c], -c))
        comp[comp == target] = best
        comp = _relabel_consecutive(comp)

    return _relabel_consecutive(comp)


def _neighbor_counts(comp: np.ndarray, target: int) -> set:
    mask = comp == target
    neigh = set()
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        rolled = np.roll(comp, shift, axis=axis)
        edge = mask & (rolled != target)
        # exclude wrap-around rows/cols
        if axis == 0:
            edge[0 if shift == 1 else -1, :] = False
        else:
            edge[:, 0 if shift == 1 else -1] = False
        neigh.update(np.unique(rolled[edge]).tolist())
    neigh.discard(target)
    return neigh


def label_agreement(pred: np.ndarray, truth: np.ndarray) -> float:
    """Pixel accuracy after mapping each predicted region to its majority truth label."""
    total = 0
    for lab in np.unique(pred):
        votes = np.bincount(truth[pred == lab].reshape(-1))
        total += votes.max()
    return total / truth.size


def validate_labelmap(labels: np.ndarray) -> None:
    """Raise unless labels are a dense 0..K-1 partition with nonempty regions."""
    if labels.ndim != 2:
        raise CseError("label map must be 2-D")
    k = num_regions(labels)
    present = np.unique(labels)
    if labels.min() < 0 or not np.array_equal(present, np.arange(k)):
        raise CseError("labels must be consecutive integers 0..K-1 with no gaps")
