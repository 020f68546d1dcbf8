"""Offline dataset enumeration and the pruned interaction regression for Z-ratios.

Features are the binary device statuses (SG commitments followed by synchronous
condenser status), the GFM strength settings alpha, and every pairwise product of
those in a fixed order: binary pairs in lexicographic order, then binary x GFM,
then GFM pairs. There is no intercept.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
import itertools
import logging
import os
import pathlib
import time

import numpy as np
import pandas as pd
import scipy.linalg

import admittance
import errors
import utils
from admittance import DeviceConfig, IllConditionedError, SingularMatrixError, ZRatioSet
from grid_case import Diagnostic, GridCase, Severity, alpha_grid

logger = logging.getLogger(__name__)

DEFAULT_PRUNE_THRESHOLD = 1e-4
MAEP_FLOOR = 1e-9


class SurrogateError(Exception):
    pass


@dataclass(frozen=True)
class FeatureLayout:
    """Feature ordering for a fleet.

    The base vector is [SG statuses, SC statuses, GFM alphas]; interaction m is the
    product of the two base entries `pairs[m]`.
    """

    n_sg: int
    n_gfm: int
    n_sc: int = 0

    @property
    def n_binary(self) -> int:
        return self.n_sg + self.n_sc

    @property
    def n_base(self) -> int:
        return self.n_binary + self.n_gfm

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        binary = range(self.n_binary)
        gfm = range(self.n_binary, self.n_base)
        ordered = list(itertools.combinations(binary, 2))
        ordered.extend((b, v) for b in binary for v in gfm)
        ordered.extend(itertools.combinations(gfm, 2))
        return tuple(ordered)

    @property
    def n_features(self) -> int:
        return self.n_base + len(self.pairs)

    def base_names(self) -> List[str]:
        names = [f"x{g + 1}" for g in range(self.n_sg)]
        names.extend(f"sc{k + 1}" for k in range(self.n_sc))
        names.extend(f"a{v + 1}" for v in range(self.n_gfm))
        return names

    def feature_names(self) -> List[str]:
        base = self.base_names()
        return base + [f"{base[i]}*{base[j]}" for i, j in self.pairs]

    def feature_terms(self) -> List[Tuple[int, ...]]:
        """Base indices multiplied together by each feature."""
        return [(i,) for i in range(self.n_base)] + list(self.pairs)

    def is_binary(self, base_index: int) -> bool:
        return base_index < self.n_binary


def layout_for(case: GridCase) -> FeatureLayout:
    return FeatureLayout(n_sg=len(case.sync_gens), n_gfm=len(case.gfm_units), n_sc=len(case.condensers))


def interaction_terms(x: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
    """Pairwise products x*x', x*alpha, alpha*alpha' in the documented order.

    Args:
        x: Binary statuses (SGs then SCs).
        alpha: GFM strength settings.

    Returns:
        The eta vector, C(|x|,2) + |x||alpha| + C(|alpha|,2) entries long.
    """
    base = np.concatenate([np.asarray(x, dtype=float), np.asarray(alpha, dtype=float)])
    layout = FeatureLayout(n_sg=len(x), n_gfm=len(alpha))
    return np.array([base[i] * base[j] for i, j in layout.pairs], dtype=float)


def feature_vector(x: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
    base = np.concatenate([np.asarray(x, dtype=float), np.asarray(alpha, dtype=float)])
    return np.concatenate([base, interaction_terms(x, alpha)])


@dataclass(frozen=True)
class ConfigSample:
    x: Tuple[int, ...]
    alpha: Tuple[float, ...]
    eta: Tuple[float, ...]
    targets: ZRatioSet

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.x, dtype=float), np.asarray(self.alpha, dtype=float), self.eta])


@dataclass
class Dataset:
    """Enumerated configurations with exact targets.

    Attributes:
        layout: Feature ordering.
        target_names: Ratio targets in `admittance.target_names` order.
        samples: Feasible configurations only.
        n_candidates: 2^|binary| * prod(levels) configurations tried.
        n_excluded: Configurations skipped as singular or ill-conditioned.
        alpha_levels: Level count per GFM the alphas were drawn from.
        diagnostics: One WARNING per exclusion batch.
    """

    layout: FeatureLayout
    target_names: Tuple[str, ...]
    samples: List[ConfigSample]
    n_candidates: int
    n_excluded: int = 0
    diagnostics: List[Diagnostic] = field(default_factory=list)
    alpha_levels: Tuple[int, ...] = ()

    def feature_matrix(self) -> np.ndarray:
        if len(self.samples) == 0:
            return np.zeros((0, self.layout.n_features))
        return np.vstack([sample.features for sample in self.samples])

    def target_matrix(self) -> np.ndarray:
        if len(self.samples) == 0:
            return np.zeros((0, len(self.target_names)))
        return np.array([[s.targets.as_targets()[name] for name in self.target_names] for s in self.samples])


def level_counts(case: GridCase, n_v: Optional[int] = None) -> Tuple[int, ...]:
    """Alpha level count per GFM: `n_v` for all of them, or each unit's own."""
    return tuple(n_v if n_v is not None else unit.alpha_levels for unit in case.gfm_units)


def _candidate_configs(case: GridCase, n_v: Optional[int]) -> Iterable[Tuple[Tuple[int, ...], Tuple[float, ...]]]:
    layout = layout_for(case)
    grids = [alpha_grid(levels) for levels in level_counts(case, n_v)]
    for x in itertools.product((0, 1), repeat=layout.n_binary):
        for alpha in itertools.product(*grids):
            yield x, alpha


def _evaluate_configs(
    case: GridCase, y0: np.ndarray, configs: List[Tuple[Tuple[int, ...], Tuple[float, ...]]]
) -> List[Optional[ConfigSample]]:
    n_sg = len(case.sync_gens)
    samples: List[Optional[ConfigSample]] = []
    for x, alpha in configs:
        config = DeviceConfig(commitments=x[:n_sg], alphas=alpha, sc_on=x[n_sg:])
        try:
            ratios = admittance.z_ratios(case, config, y0)
        except (SingularMatrixError, IllConditionedError) as err:
            logger.debug("Excluded configuration x=%s alpha=%s: %s", x, alpha, err)
            samples.append(None)
            continue
        eta = tuple(float(v) for v in interaction_terms(x, alpha))
        samples.append(ConfigSample(x=tuple(x), alpha=tuple(alpha), eta=eta, targets=ratios))
    return samples


def _chunks(items: List[Any], size: int) -> List[List[Any]]:
    return [items[start:start + size] for start in range(0, len(items), size)]


def enumerate_dataset(case: GridCase, n_v: Optional[int] = None, workers: int = 1) -> Dataset:
    """Enumerates every configuration and evaluates its exact Z-ratios.

    Args:
        case: A normalized case.
        n_v: Alpha levels for every GFM; None uses each unit's own `alpha_levels`.
        workers: Process count; results are identical for any value.

    Returns:
        The dataset with exclusions counted, never raised.
    """
    if n_v is not None and n_v < 2:
        utils.log_and_raise(logger.error, f"n_v must be at least 2, got {n_v}.", SurrogateError("n_v < 2"),
                            errors.SU_BAD_LEVELS)

    started = time.perf_counter()
    configs = list(_candidate_configs(case, n_v))
    y0 = admittance.build_y0(case)

    if workers > 1 and len(configs) > 1:
        batches = _chunks(configs, max(1, len(configs) // (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                itertools.chain.from_iterable(pool.map(_evaluate_configs, itertools.repeat(case), itertools.repeat(y0), batches))
            )
    else:
        results = _evaluate_configs(case, y0, configs)

    samples = [sample for sample in results if sample is not None]
    n_excluded = len(results) - len(samples)
    diagnostics = []
    if n_excluded > 0:
        diagnostics.append(
            Diagnostic(Severity.WARNING, "dataset", f"{n_excluded} singular or ill-conditioned configurations excluded.",
                       errors.AD_SINGULAR)
        )
    logger.info("Enumerated %d candidates (%d excluded) in %.2f s", len(configs), n_excluded,
                time.perf_counter() - started)
    return Dataset(
        layout=layout_for(case),
        target_names=admittance.target_names(case),
        samples=samples,
        n_candidates=len(configs),
        n_excluded=n_excluded,
        diagnostics=diagnostics,
        alpha_levels=level_counts(case, n_v),
    )


@dataclass
class TargetFit:
    """Pruned least-squares fit of one ratio target.

    Attributes:
        coefficients: One entry per feature, exactly zero where pruned.
        retained: Indices of the nonzero coefficients.
        mse, maep: Training error of the pruned refit (MAEP in percent).
        mse_full, maep_full: Training error of the unpruned fit.
        prune_bound: Upper bound on the MSE increase from the removed columns.
    """

    name: str
    coefficients: np.ndarray
    retained: Tuple[int, ...]
    mse: float
    maep: float
    mse_full: float = 0.0
    maep_full: float = 0.0
    prune_bound: float = 0.0


@dataclass
class SurrogateModel:
    layout: FeatureLayout
    labels: Tuple[str, ...]
    fits: Dict[str, TargetFit]
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    n_samples: int = 0
    diagnostics: List[Diagnostic] = field(default_factory=list)
    alpha_levels: Tuple[int, ...] = ()

    def coefficients(self, target: str) -> np.ndarray:
        if target not in self.fits:
            utils.log_and_raise(logger.error, f"Model has no target {target}.", SurrogateError(target),
                                errors.SU_UNKNOWN_TARGET)
        return self.fits[target].coefficients

    def matches(self, case: GridCase) -> bool:
        """True when the model was fitted for the fleet and IBG placement of `case`."""
        return self.layout == layout_for(case) and self.labels == admittance.ibg_labels(case)


def mse(prediction: np.ndarray, actual: np.ndarray) -> float:
    return float(np.mean((prediction - actual) ** 2))


def maep(prediction: np.ndarray, actual: np.ndarray) -> float:
    """Mean absolute error percentage over samples with |actual| >= 1e-9."""
    mask = np.abs(actual) >= MAEP_FLOOR
    if not np.any(mask):
        return 0.0
    return float(np.mean(np.abs(prediction[mask] - actual[mask]) / np.abs(actual[mask])) * 100.0)


def pruning_error_bound(features: np.ndarray, full_coefficients: np.ndarray, retained: Sequence[int], full_mse: float) -> float:
    """MSE the pruned refit cannot exceed: keep the full fit and drop the removed terms."""
    removed = np.setdiff1d(np.arange(features.shape[1]), np.asarray(retained, dtype=int))
    if removed.size == 0:
        return full_mse
    dropped = features[:, removed] @ full_coefficients[removed]
    n = features.shape[0]
    full_residual_norm = np.sqrt(full_mse * n)
    return float((full_residual_norm + np.linalg.norm(dropped)) ** 2 / n)


def _least_squares(features: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, int]:
    solution, _, rank, _ = scipy.linalg.lstsq(features, target, lapack_driver="gelsy")
    return solution, int(rank)


def _fit_target(name: str, features: np.ndarray, target: np.ndarray, prune_threshold: float,
                diagnostics: List[Diagnostic]) -> TargetFit:
    n_features = features.shape[1]
    full, rank = _least_squares(features, target)
    if rank < n_features:
        message = f"Feature matrix has rank {rank} < {n_features}; using the minimum-norm solution for {name}."
        logger.warning("%s: %s", errors.SU_RANK_DEFICIENT, message)
        diagnostics.append(Diagnostic(Severity.WARNING, name, message, errors.SU_RANK_DEFICIENT))

    full_prediction = features @ full
    mse_full = mse(full_prediction, target)
    retained = np.flatnonzero(np.abs(full) >= prune_threshold)

    coefficients = np.zeros(n_features)
    if retained.size > 0:
        refit, _ = _least_squares(features[:, retained], target)
        coefficients[retained] = refit
    retained = np.flatnonzero(coefficients != 0.0)
    prediction = features @ coefficients
    return TargetFit(
        name=name,
        coefficients=coefficients,
        retained=tuple(int(i) for i in retained),
        mse=mse(prediction, target),
        maep=maep(prediction, target),
        mse_full=mse_full,
        maep_full=maep(full_prediction, target),
        prune_bound=pruning_error_bound(features, full, retained, mse_full),
    )


def fit(
    dataset: Dataset, targets: Optional[Sequence[str]] = None, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
) -> SurrogateModel:
    """Two-pass least squares per target: full fit, prune |k| < threshold, refit.

    Args:
        dataset: Output of `enumerate_dataset` (or a hand-built Dataset).
        targets: Subset of `dataset.target_names`; all of them by default.
        prune_threshold: Coefficients below this magnitude are zeroed.

    Returns:
        The fitted model with per-target MSE and MAEP.
    """
    features = dataset.feature_matrix()
    if features.shape[0] == 0:
        utils.log_and_raise(logger.error, "Cannot fit on an empty dataset.", SurrogateError("empty dataset"),
                            errors.SU_EMPTY_DATASET)
    if np.all(features.max(axis=0) == features.min(axis=0)):
        utils.log_and_raise(logger.error, "Every feature is constant over the dataset.",
                            SurrogateError("constant features"), errors.SU_CONSTANT_FEATURES)

    names = list(dataset.target_names if targets is None else targets)
    unknown = [name for name in names if name not in dataset.target_names]
    if len(unknown) > 0:
        utils.log_and_raise(logger.error, f"Unknown targets {unknown}.", SurrogateError(str(unknown)),
                            errors.SU_UNKNOWN_TARGET)

    values = dataset.target_matrix()
    diagnostics: List[Diagnostic] = []
    fits = {}
    for name in names:
        column = values[:, dataset.target_names.index(name)]
        fits[name] = _fit_target(name, features, column, prune_threshold, diagnostics)
        logger.info("Fitted %s: mse=%.3e maep=%.3f%% retained=%d", name, fits[name].mse, fits[name].maep,
                    len(fits[name].retained))

    labels = dataset.samples[0].targets.labels
    return SurrogateModel(
        layout=dataset.layout,
        labels=labels,
        fits=fits,
        prune_threshold=prune_threshold,
        n_samples=features.shape[0],
        diagnostics=diagnostics,
        alpha_levels=dataset.alpha_levels,
    )


def predict(model: SurrogateModel, x: Sequence[float], alpha: Sequence[float]) -> ZRatioSet:
    """Evaluates every fitted target at (x, alpha).

    Raises:
        SurrogateError: When x or alpha does not match the model's fleet.
    """
    layout = model.layout
    if len(x) != layout.n_binary or len(alpha) != layout.n_gfm:
        utils.log_and_raise(
            logger.error,
            f"Expected {layout.n_binary} statuses and {layout.n_gfm} alphas, got {len(x)} and {len(alpha)}.",
            SurrogateError("dimension mismatch"),
            errors.SU_DIMENSION_MISMATCH,
        )
    features = feature_vector(x, alpha)

    def value(name: str) -> float:
        fitted = model.fits.get(name)
        return 0.0 if fitted is None else float(fitted.coefficients @ features)

    labels = model.labels
    self_ratio = tuple(value(admittance.self_target_name(label)) for label in labels)
    mutual = {
        (c, o): value(admittance.mutual_target_name(labels[c], labels[o]))
        for c in range(len(labels))
        for o in range(len(labels))
        if c != o
    }
    return ZRatioSet(labels=labels, self_ratio=self_ratio, mutual_ratio=mutual)


def fit_case(case: GridCase, n_v: Optional[int] = None, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
             workers: int = 1) -> SurrogateModel:
    """Enumerate and fit in one call."""
    dataset = enumerate_dataset(case, n_v=n_v, workers=workers)
    model = fit(dataset, prune_threshold=prune_threshold)
    model.diagnostics[:0] = dataset.diagnostics
    return model


def metrics_table(model: SurrogateModel) -> pd.DataFrame:
    """One row per target: target, mse, maep_pct, n_features_retained."""
    rows = [
        {"target": name, "mse": fitted.mse, "maep_pct": fitted.maep, "n_features_retained": len(fitted.retained)}
        for name, fitted in model.fits.items()
    ]
    return pd.DataFrame(rows, columns=["target", "mse", "maep_pct", "n_features_retained"])


def to_document(model: SurrogateModel) -> Dict[str, Any]:
    layout = model.layout
    return {
        "layout": {"n_sg": layout.n_sg, "n_sc": layout.n_sc, "n_gfm": layout.n_gfm},
        "features": layout.feature_names(),
        "labels": list(model.labels),
        "prune_threshold": model.prune_threshold,
        "n_samples": model.n_samples,
        "alpha_levels": list(model.alpha_levels),
        "targets": {
            name: {
                "coefficients": [float(k) for k in fitted.coefficients],
                "retained": list(fitted.retained),
                "mse": fitted.mse,
                "maep_pct": fitted.maep,
                "mse_full": fitted.mse_full,
                "maep_full_pct": fitted.maep_full,
            }
            for name, fitted in model.fits.items()
        },
    }


def from_document(document: Dict[str, Any]) -> SurrogateModel:
    try:
        layout = FeatureLayout(**document["layout"])
        fits = {}
        for name, entry in document["targets"].items():
            coefficients = np.asarray(entry["coefficients"], dtype=float)
            if coefficients.size != layout.n_features:
                raise ValueError(f"{name} has {coefficients.size} coefficients, layout needs {layout.n_features}")
            fits[name] = TargetFit(
                name=name,
                coefficients=coefficients,
                retained=tuple(entry["retained"]),
                mse=float(entry["mse"]),
                maep=float(entry["maep_pct"]),
                mse_full=float(entry.get("mse_full", 0.0)),
                maep_full=float(entry.get("maep_full_pct", 0.0)),
            )
        return SurrogateModel(
            layout=layout,
            labels=tuple(str(label) for label in document["labels"]),
            fits=fits,
            prune_threshold=float(document["prune_threshold"]),
            n_samples=int(document.get("n_samples", 0)),
            alpha_levels=tuple(int(n) for n in document.get("alpha_levels", ())),
        )
    except (KeyError, TypeError, ValueError) as err:
        utils.log_and_raise(logger.error, f"Malformed surrogate model document: {err}", SurrogateError(str(err)),
                            errors.SU_BAD_MODEL_FILE)


def save_model(model: SurrogateModel, path: pathlib.Path) -> None:
    utils.write_yaml(path, to_document(model))


def load_model(path: pathlib.Path) -> SurrogateModel:
    if not os.path.exists(path):
        utils.log_and_raise(logger.error, f"Path {str(path)} does not exist.", SurrogateError(str(path)),
                            errors.SU_BAD_MODEL_FILE)
    return from_document(utils.get_config(path, logger))
