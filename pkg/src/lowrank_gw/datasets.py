"""Synthetic point clouds and CSV persistence for clouds, couplings and reports."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import wishart

from ._errors import InputError, ValidationError
from .costs import as_points
from .dykstra import LowRankCoupling

KINDS = ("mixture", "blobs", "curve2d", "curve3d", "unit_square", "isometric_pair")
REJECTION_BUDGET = 10_000


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for :func:`generate`.

    ``k`` and ``beta`` are the number of clusters and the minimum distance
    between centroids (``blobs`` and ``mixture``).  ``std`` is the isotropic
    spread of ``blobs``.
    """

    kind: str
    n: int
    d: int = 2
    k: int = 1
    beta: float = 10.0
    seed: int = 0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown dataset kind {self.kind!r}; choose from {KINDS}")
        if self.n < 1:
            raise InputError("n must be at least 1")
        if self.d < 1:
            raise InputError("d must be at least 1")
        if self.kind in ("blobs", "mixture") and (self.k < 1 or self.k > self.n):
            raise InputError(f"cluster count k={self.k} must lie in [1, n]")
        if self.beta < 0:
            raise InputError("beta must be nonnegative")


def rng_for(seed):
    return np.random.Generator(np.random.Philox(seed))


def _centroids(rng, k, d, beta):
    # the box does not grow with beta, so an infeasible beta exhausts the budget
    half = 10.0 * k ** (1.0 / d)
    centers = []
    attempts = 0
    while len(centers) < k:
        attempts += 1
        if attempts > REJECTION_BUDGET:
            raise InputError(
                f"could not place {k} centroids at mutual distance >= {beta} "
                f"within {REJECTION_BUDGET} draws"
            )
        c = rng.uniform(-half, half, d)
        if all(np.linalg.norm(c - o) >= beta for o in centers):
            centers.append(c)
    return np.array(centers)


def _split(n, k):
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return sizes


def _arc_length_curve(curve, n, rng, t_max):
    t = np.linspace(0.0, t_max, 20_000)
    pts = curve(t)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.sort(rng.uniform(0.0, s[-1], n))
    return curve(np.interp(targets, s, t))


def _spiral(t):
    radius = 0.2 + t / (4 * np.pi)
    return np.column_stack([radius * np.cos(t), radius * np.sin(t)])


def _helix(t):
    return np.column_stack([np.cos(t), np.sin(t), t / (2 * np.pi)])


def generate(spec):
    """Draw the point cloud described by ``spec``; a pure function of it."""
    rng = rng_for(spec.seed)
    n, d = spec.n, spec.d
    if spec.kind == "unit_square":
        return rng.uniform(0.0, 1.0, (n, 2))
    if spec.kind in ("curve2d", "isometric_pair"):
        return _arc_length_curve(_spiral, n, rng, 4 * np.pi)
    if spec.kind == "curve3d":
        return _arc_length_curve(_helix, n, rng, 4 * np.pi)
    centers = _centroids(rng, spec.k, d, spec.beta)
    parts = []
    for c, size in zip(centers, _split(n, spec.k)):
        if spec.kind == "blobs":
            parts.append(c + spec.std * rng.standard_normal((size, d)))
        else:
            cov = wishart(df=d + 2, scale=np.eye(d) / (d + 2)).rvs(random_state=rng)
            cov = np.atleast_2d(cov)
            parts.append(rng.multivariate_normal(c, cov, size=size))
    return np.vstack(parts)


def cluster_labels(spec):
    """Cluster index of each generated point (``blobs``/``mixture`` only)."""
    return np.repeat(np.arange(spec.k), _split(spec.n, spec.k))


def rotation_2d(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def isometric_pair(X, theta=0.0, translation=None, rotation=None):
    """Rotate and translate ``X``; returns ``(X, Y, identity permutation)``.

    In 2-D the rotation is by ``theta``; otherwise pass an orthogonal
    ``rotation`` matrix.
    """
    X = as_points(X)
    d = X.shape[1]
    if rotation is None:
        if d != 2:
            raise InputError("pass an orthogonal rotation matrix when d != 2")
        rotation = rotation_2d(theta)
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (d, d) or not np.allclose(rotation.T @ rotation, np.eye(d), atol=1e-10):
        raise InputError("rotation must be an orthogonal (d, d) matrix")
    t = np.zeros(d) if translation is None else np.asarray(translation, dtype=float)
    Y = X @ rotation.T + t
    return X, Y, np.arange(X.shape[0])


def _write_rows(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def _read_rows(path):
    rows = []
    width = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise InputError(f"{path}: line {lineno}: expected {width} values, found {len(values)}")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: file is empty")
    return np.array(rows, dtype=float)


def load_matrix(path):
    """Any rectangular numeric CSV (e.g. a precomputed cost matrix)."""
    return _read_rows(path)


def save_point_cloud(path, cloud):
    """Headerless CSV, one point per row, shortest round-trip float repr."""
    _write_rows(path, as_points(cloud))


def load_point_cloud(path):
    return as_points(_read_rows(path), str(path))


def save_coupling(path, plan):
    _write_rows(path, np.atleast_2d(np.asarray(getattr(plan, "plan", plan), dtype=float)))


def load_coupling(path, a=None, b=None, tol=1e-6):
    plan = _read_rows(path)
    res = {}
    if np.any(plan < 0):
        res["negative entries"] = float(plan.min())
    if a is not None:
        res_a = float(np.abs(plan.sum(1) - a).sum())
        if res_a > tol:
            res["P1-a"] = res_a
    if b is not None:
        res_b = float(np.abs(plan.sum(0) - b).sum())
        if res_b > tol:
            res["PT1-b"] = res_b
    if res:
        raise ValidationError(f"{path}: coupling violates its invariants: {res}", res)
    return plan


def save_low_rank(prefix, triple):
    """Write ``<prefix>.Q.csv``, ``<prefix>.R.csv`` and ``<prefix>.g.csv``."""
    _write_rows(f"{prefix}.Q.csv", triple.Q)
    _write_rows(f"{prefix}.R.csv", triple.R)
    _write_rows(f"{prefix}.g.csv", triple.g[:, None])


def load_low_rank(prefix, a=None, b=None, alpha=0.0, tol=1e-3):
    """Read a triple back and re-check its invariants at ``tol``."""
    Q = _read_rows(f"{prefix}.Q.csv")
    R = _read_rows(f"{prefix}.R.csv")
    g = _read_rows(f"{prefix}.g.csv")[:, 0]
    if Q.shape[1] != g.shape[0] or R.shape[1] != g.shape[0]:
        raise ValidationError(f"{prefix}: factor widths {Q.shape[1]}, {R.shape[1]} disagree with len(g)={g.shape[0]}")
    triple = LowRankCoupling(Q, R, g)
    triple.validate(a, b, alpha=alpha, tol=tol)
    return triple


REPORT_HEADER = ("iter", "loss", "delta", "inner_iters", "elapsed_ms")


def save_report(path, report, deterministic=False):
    """CSV with header ``iter,loss,delta,inner_iters,elapsed_ms``.

    ``delta`` is left empty when not computed; ``deterministic`` writes
    ``0.000`` for the wall-clock column so identical runs give identical files.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPORT_HEADER) + "\n")
        for it, loss, delta, inner, ms in report.rows():
            fh.write(
                f"{it},{loss!r},{'' if delta is None else repr(float(delta))},{inner},"
                f"{0.0 if deterministic else ms:.3f}\n"
            )


def load_report(path):
    from .report import SolveReport

    rep = SolveReport()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_HEADER:
            raise InputError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            rep.losses.append(float(row["loss"]))
            rep.deltas.append(float(row["delta"]) if row["delta"] else None)
            rep.inner_iterations.append(int(row["inner_iters"]))
            rep.elapsed_ms.append(float(row["elapsed_ms"]))
    return rep
