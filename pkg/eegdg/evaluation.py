# -*- coding: utf-8 -*-
"""
Scores, classical baselines and feature export. Define `MetricsReport`, `accuracy`, `kappa`,
`baseline_fit_predict`, `run_baselines` and `export_features`.

The baselines see the pooled source domains as flat feature vectors:
    - ``knn``: k-nearest neighbours, Euclidean, ties to the smallest label.
    - ``lda``: shared covariance discriminant with a ridge of 1e-6 on the covariance,
      after a PCA down to `LDA_MAX_FEATURES` dimensions for wider inputs such as raw EEG windows.
    - ``linear``: linear SVM trained by stochastic gradient descent (hinge loss, L2 penalty), seeded.
"""

import logging

import numpy as np
from sklearn.covariance import EmpiricalCovariance
from sklearn.decomposition import PCA
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.linear_model import SGDClassifier
from sklearn.metrics import confusion_matrix
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .core.errors import ConfigurationError, ContractError, NumericError
from .core.types import RecordDict, RecordList
from .core.utils import format_mean_std, mean_std
from .model import branch_features, domain_weights, extract, fuse
from .tensor import no_grad

log = logging.getLogger("eegdg")

BASELINES = ("knn", "lda", "linear")
STAGES = ("extractor", "branch", "fused")
LDA_MAX_FEATURES = 256
"""Flat inputs wider than this are projected by PCA before the discriminant."""


class MetricsReport(RecordDict):
    """
    Scores of one prediction set: ``accuracy``, ``kappa``, ``confusion`` (rows are true classes),
    ``n_samples`` and ``class_count``.
    """

    @property
    def text(self):
        return "accuracy={:.4f}, kappa={:.4f}, n_samples={}".format(
            self["accuracy"], self["kappa"], self["n_samples"]
        )


def accuracy(pred, truth):
    """Fraction of exact matches."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size < 1:
        raise ContractError(
            "Cannot score {} predictions against {} labels".format(pred.size, truth.size)
        )
    return float(np.mean(pred == truth))


def kappa(acc, class_count):
    """Chance corrected accuracy ``(acc - 1/C) / (1 - 1/C)``."""
    if class_count < 2:
        raise ContractError("kappa needs at least 2 classes, not {}".format(class_count))
    if not 0.0 <= acc <= 1.0:
        raise ContractError("accuracy must be in [0, 1], not {}".format(acc))
    chance = 1.0 / class_count
    return (acc - chance) / (1.0 - chance)


def confusion(pred, truth, n_classes):
    """``[n_classes x n_classes]`` counts, rows are true classes."""
    return confusion_matrix(truth, pred, labels=list(range(n_classes)))


def metrics_report(pred, truth, n_classes):
    acc = accuracy(pred, truth)
    return MetricsReport(
        {
            "accuracy": acc,
            "kappa": kappa(acc, n_classes),
            "confusion": confusion(pred, truth, n_classes).tolist(),
            "n_samples": int(np.asarray(truth).size),
            "class_count": n_classes,
        }
    )


def summarize(reports):
    """
    Mean and population standard deviation of accuracy and kappa over several reports.
    """
    accs = [r["accuracy"] for r in reports]
    kappas = [r["kappa"] for r in reports]
    acc_mean, acc_std = mean_std(accs)
    kappa_mean, kappa_std = mean_std(kappas)
    return RecordDict(
        {
            "n_reports": len(reports),
            "accuracy_mean": acc_mean,
            "accuracy_std": acc_std,
            "kappa_mean": kappa_mean,
            "kappa_std": kappa_std,
            "accuracy": format_mean_std(accs),
            "kappa": format_mean_std(kappas, scale=1.0, digits=4),
        }
    )


class RidgeCovariance(EmpiricalCovariance):
    """
    Maximum likelihood covariance plus ``ridge * I``.

    Holds a ``D x D`` matrix, `baseline_fit_predict` caps ``D`` at `LDA_MAX_FEATURES`.
    The precision matrix is only computed when `store_precision` is set.

    Raises:
        `NumericError` when the regularized covariance is still singular.
    """

    def __init__(self, ridge=1e-6, store_precision=False, assume_centered=False):
        super().__init__(store_precision=store_precision, assume_centered=assume_centered)
        self.ridge = ridge

    def fit(self, X, y=None):
        super().fit(X, y)
        cov = self.covariance_ + self.ridge * np.eye(self.covariance_.shape[0])
        eig = np.linalg.eigvalsh(cov)
        cond = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
        if not np.isfinite(cond) or cond > 1e15:
            raise NumericError(
                "Singular covariance despite the ridge", diagnostics={"condition": cond}
            )
        self.covariance_ = cov
        if self.store_precision:
            self.precision_ = np.linalg.inv(cov)
        return self


def _pool(datasets):
    x = np.concatenate([ds.x.reshape(len(ds), -1) for ds in datasets])
    y = np.concatenate([ds.y for ds in datasets])
    return x, y


def make_baseline(kind, k=3, seed=0, n_components=None):
    """
    Unfitted scikit-learn estimator for a baseline kind.
    With `n_components` the ``lda`` estimator starts with a seeded randomized PCA.
    """
    if kind == "knn":
        return KNeighborsClassifier(n_neighbors=k, algorithm="brute")
    if kind == "lda":
        lda = LinearDiscriminantAnalysis(
            solver="lsqr", covariance_estimator=RidgeCovariance(ridge=1e-6)
        )
        if n_components is None:
            return lda
        return make_pipeline(
            PCA(n_components=n_components, svd_solver="randomized", random_state=seed), lda
        )
    if kind == "linear":
        return make_pipeline(
            StandardScaler(),
            SGDClassifier(loss="hinge", penalty="l2", random_state=seed),
        )
    raise ConfigurationError(
        "Unknown baseline {!r}, expected one of {}".format(kind, BASELINES)
    )


def baseline_fit_predict(kind, train, test, k=3, seed=0):
    """
    Fit a baseline on the pooled training domains, predict the test domain.

    Arguments:
        - `kind` (`str`): ``knn``, ``lda`` or ``linear``.
        - `train` (`list[DomainDataset]`): source domains.
        - `test` (`DomainDataset`)

    Returns:
        `numpy.ndarray` of predicted labels.
    """
    x, y = _pool(train)
    if x.shape[0] < 1:
        raise ContractError("Baselines need training samples")
    n_components = None
    if kind == "lda" and x.shape[1] > LDA_MAX_FEATURES:
        n_components = min(LDA_MAX_FEATURES, x.shape[0])
        log.debug(
            "LDA on {} features, projecting to {} components".format(x.shape[1], n_components)
        )
    estimator = make_baseline(kind, k=k, seed=seed, n_components=n_components)
    estimator.fit(x, y)
    return np.asarray(estimator.predict(test.x.reshape(len(test), -1)), dtype=np.int64)


def run_baselines(sources, targets, kinds=BASELINES, k=3, seed=0):
    """
    Comparison table: one row per method, one accuracy column per target domain and the mean±std.

    Returns:
        `RecordList` of rows
    """
    tasks = RecordList([(kind, target) for kind in kinds for target in targets])

    def score(task):
        kind, target = task
        pred = baseline_fit_predict(kind, sources, target, k=k, seed=seed)
        return accuracy(pred, target.y)

    scores = tasks.perform(score, asynch=True, progress=True, message="Running baselines")
    rows = RecordList()
    for i, kind in enumerate(kinds):
        accs = scores[i * len(targets) : (i + 1) * len(targets)]
        row = RecordDict({"method": "{}{}".format(k, "nn") if kind == "knn" else kind})
        for target, acc in zip(targets, accs):
            row["target_{}".format(target.domain_id)] = acc
        row["mean"] = format_mean_std(accs)
        rows.append(row)
    return rows


def pca_2d(features):
    """
    First two principal components of the rows of `features`.
    Missing components (one feature or one sample) are zero columns.
    """
    features = np.asarray(features, dtype=np.float64)
    n_comp = min(2, features.shape[0], features.shape[1])
    projected = PCA(n_components=n_comp).fit_transform(features)
    if n_comp < 2:
        projected = np.hstack([projected, np.zeros((features.shape[0], 2 - n_comp))])
    return projected


def stage_features(model, ds, stage, branch=None):
    """
    Eval-mode features of a domain.

    Arguments:
        - `stage` (`str`): ``extractor``, ``branch`` or ``fused``.
        - `branch` (`int`): branch used at the ``branch`` stage. Without a branch (target domains)
          the fused features are returned.
    """
    if stage not in STAGES:
        raise ConfigurationError("Unknown stage {!r}, expected one of {}".format(stage, STAGES))
    with no_grad():
        z = extract(model, ds.x, train=False)
        if stage == "extractor":
            return z.data
        outs = branch_features(model, z)
        if stage == "branch" and branch is not None:
            return outs[branch].data
        return fuse(domain_weights(model, z), outs).data


def export_features(model, sources, targets, path, stage="branch"):
    """
    Write features of every sample as CSV: ``domain_id, label, split, stage``, the feature values
    ``f0..fd`` and the 2-D PCA projection ``pc1, pc2`` computed over all the rows.

    Source domain n goes through branch n at the ``branch`` stage, target domains through the fusion.

    Returns:
        `RecordList` of the exported rows
    """
    blocks = list()
    for n, ds in enumerate(sources):
        blocks.append((ds, "source", stage_features(model, ds, stage, branch=n)))
    for ds in targets:
        blocks.append((ds, "target", stage_features(model, ds, stage)))

    features = np.concatenate([b[2] for b in blocks])
    projected = pca_2d(features)
    rows = RecordList()
    offset = 0
    for ds, split, values in blocks:
        for i in range(len(ds)):
            row = RecordDict(
                {
                    "domain_id": ds.domain_id,
                    "label": int(ds.y[i]),
                    "split": split,
                    "stage": stage,
                }
            )
            for j, v in enumerate(values[i]):
                row["f{}".format(j)] = float(v)
            row["pc1"] = float(projected[offset + i, 0])
            row["pc2"] = float(projected[offset + i, 1])
            rows.append(row)
        offset += len(ds)

    try:
        with open(path, "w", newline="") as f:
            f.write(rows.get_text(format="csv"))
    except OSError as e:
        raise OSError("Cannot write features to {}: {}".format(path, e)) from e
    log.info("{} feature rows exported to {}".format(len(rows), path))
    return rows
