"""Training runs, their reports and saved models."""

import hashlib
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .. import rmlr
from ..estimators import make_classifier
from ..exceptions import DivergenceError
from ..spdgeo import MetricParams
from . import data as bdata
from .config import RunConfig

CSV_HEADER = "epoch,train_loss,train_acc,test_acc,seconds"


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class RunReport:
    """Per-epoch metrics of a run plus a digest of its outcome.

    The digest hashes every row except the wall-clock column together with the
    final parameters, so it only depends on the config and the data.
    """

    config: RunConfig
    rows: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def final(self):
        return self.rows[-1]

    @property
    def digest(self):
        h = hashlib.sha256()
        for r in self.rows:
            h.update(f"{r.epoch},{r.train_loss!r},{r.train_acc!r},{r.test_acc!r};".encode())
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name], dtype=np.float64)
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    def to_csv(self):
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_loss:.17g},{r.train_acc:.17g},{r.test_acc:.17g},{r.seconds:.6f}")
        f = self.final
        lines.append(
            f"summary,{f.train_loss:.17g},{f.train_acc:.17g},{f.test_acc:.17g},{self.seconds:.6f}"
            f",classifier={self.config.classifier},digest={self.digest}"
        )
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def make_dataset(cfg):
    """Synthetic dataset described by the data fields of ``cfg``."""
    if cfg.data_kind == "so3":
        return bdata.gen_so3_data(cfg.blocks, cfg.n_classes, cfg.per_class, cfg.sigma, cfg.seed)
    return bdata.gen_spd_data(cfg.n, cfg.n_classes, cfg.per_class, cfg.sigma, cfg.seed)


def model_seed(seed):
    """Parameter-initialization seed derived from the run seed.

    Kept apart from the data stream: drawing both from ``seed`` directly would
    make the first initial tangent parameters copies of the class-mean
    logarithms.
    """
    return int(np.random.SeedSequence([seed, 0x5EED]).generate_state(1)[0])


def build_estimator(cfg, n=None):
    kw = dict(
        max_epochs=cfg.epochs,
        batch_size=cfg.batch,
        lr=cfg.lr,
        momentum=cfg.momentum,
        grad_clip=cfg.grad_clip,
        random_state=model_seed(cfg.seed),
    )
    mp = cfg.metric_params(n)
    if mp is not None:
        kw.update(theta=mp.theta, alpha=mp.alpha, beta=mp.beta)
    return make_classifier(cfg.classifier, **kw)


def _check_compatible(dataset, cfg):
    if dataset.kind != cfg.data_kind:
        raise ValueError(f"classifier {cfg.classifier!r} needs {cfg.data_kind} data, got {dataset.kind}")


def _mean_xent(clf, X, y):
    loss, _ = rmlr.softmax_xent(clf.decision_function(X), clf._encode(y))
    return float(loss)


def train(dataset, cfg, callback=None):
    """Train the classifier of ``cfg`` on ``dataset``, evaluating after every epoch.

    Row 0 describes the freshly initialized model. Training loss of later rows
    is the mean mini-batch loss seen during that epoch.

    Returns
    -------
    RunReport
    estimator

    Raises
    ------
    DivergenceError
        With ``epoch`` set to the (1-based) epoch in which the step failed.
    """
    _check_compatible(dataset, cfg)
    Xtr, ytr = dataset.train
    Xte, yte = dataset.test
    clf = build_estimator(cfg, dataset.n if dataset.kind == "spd" else None)
    t0 = time.perf_counter()
    clf.initialize(Xtr, ytr, classes=np.arange(dataset.n_classes))
    report = RunReport(cfg)
    report.rows.append(EpochRow(0, _mean_xent(clf, Xtr, ytr), clf.score(Xtr, ytr), clf.score(Xte, yte), 0.0))
    for epoch in range(1, cfg.epochs + 1):
        try:
            clf.partial_fit(Xtr, ytr)
        except DivergenceError as exc:
            exc.epoch = epoch
            exc.args = (f"epoch {epoch}: {exc.args[0]}",) + exc.args[1:]
            raise
        row = EpochRow(
            epoch,
            float(clf.loss_curve_[-1]),
            float(clf.score(Xtr, ytr)),
            float(clf.score(Xte, yte)),
            time.perf_counter() - t0,
        )
        report.rows.append(row)
        if callback is not None:
            callback(row)
    report.seconds = time.perf_counter() - t0
    report.params = layer_arrays(clf.layer_)
    return report, clf


def layer_arrays(layer):
    if isinstance(layer, rmlr.LogEigLayer):
        return {"weight": layer.weight.copy(), "bias": layer.bias.copy()}
    return {"P": layer.P.copy(), "A": layer.A.copy()}


def save_model(clf, cfg, path):
    """Write a fitted estimator to ``path`` as an ``.npz`` archive."""
    meta = {"config": cfg.dumps(), "classes": clf.classes_.tolist()}
    layer = clf.layer_
    if isinstance(layer, rmlr.SpdMlrLayer):
        mp = layer.mp
        meta["metric"] = [mp.family, mp.theta, mp.alpha, mp.beta]
    arrays = layer_arrays(layer)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(estimator, config)``."""
    from .config import parse_config_text

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in z.files if k != "meta"}
    cfg = RunConfig(**parse_config_text(meta["config"]))
    clf = build_estimator(cfg)
    if "metric" in meta:
        layer = rmlr.SpdMlrLayer(MetricParams(*meta["metric"]), arrays["P"], arrays["A"])
    elif cfg.classifier == "lie":
        layer = rmlr.LieMlrLayer(arrays["P"], arrays["A"])
    else:
        layer = rmlr.LogEigLayer(arrays["weight"], arrays["bias"])
    clf.layer_ = layer
    clf.classes_ = np.asarray(meta["classes"])
    if isinstance(layer, rmlr.LogEigLayer):
        n = int(round((np.sqrt(8 * layer.weight.shape[1] + 1) - 1) / 2))
        clf.sample_shape_ = (n, n)
    else:
        clf.sample_shape_ = layer.P.shape[1:]
    return clf, cfg


def evaluate(clf, dataset, split="test"):
    """Accuracy of ``clf`` on a split (``train``, ``test`` or ``all``)."""
    if split == "all":
        X, y = dataset.X, dataset.y
    else:
        X, y = getattr(dataset, split)
    return float(clf.score(X, y))


def report_from_csv(text):
    """Parse the rows of a CSV written by :meth:`RunReport.to_csv`."""
    rows = []
    for line in io.StringIO(text):
        parts = line.strip().split(",")
        if not parts[0] or parts[0] in ("epoch", "summary"):
            continue
        rows.append(EpochRow(int(parts[0]), *map(float, parts[1:5])))
    return rows
