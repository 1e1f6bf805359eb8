"""Synthetic data, random masking, image <-> matrix conversion and MovieLens ingestion."""
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParseError, ValidationError
from .numeric import as_matrix, make_rng

ML100K = "ml100k_tab"
ML1M = "ml1m_colons"

# format tag -> (users, items, field separator)
MOVIELENS_FORMATS = {
    ML100K: (943, 1682, "\t"),
    ML1M: (6040, 3952, "::"),
}


@dataclass
class ObservedMatrix:
    """Partially observed matrix; ``data`` is zero wherever ``mask`` is zero."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = as_matrix(self.data, "data")
        self.mask = as_matrix(self.mask, "mask")
        if self.data.shape != self.mask.shape:
            raise ValueError("data %s and mask %s differ in shape"
                             % (self.data.shape, self.mask.shape))
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if np.any(self.data[self.mask == 0] != 0):
            raise ValueError("data must be zero on unobserved entries")

    @classmethod
    def from_full(cls, x, mask):
        mask = np.asarray(mask, dtype=np.float64)
        return cls(np.asarray(x, dtype=np.float64) * mask, mask)

    @property
    def shape(self):
        return self.data.shape

    @property
    def omega_count(self):
        return int(self.mask.sum())


def _g(t):
    return 1.71 * np.tanh(2.0 / 3.0 * t)


def synthetic_from_factors(a, b):
    ab = np.asarray(a) @ np.asarray(b)
    g_ab = _g(ab)
    return _g(1.2 * (0.5 * g_ab ** 2 - g_ab - 1.0)) + ab


def gen_synthetic(m, n, r, seed):
    """Nonlinear rank-``r`` matrix ``g(1.2(0.5 g(AB)^2 - g(AB) - 1)) + AB``.

    ``g(t) = 1.71 tanh(2t/3)`` elementwise; ``A`` (m x r) and ``B`` (r x n)
    have i.i.d. standard normal entries drawn from ``make_rng(seed)``.
    """
    if not 0 < r < min(m, n):
        raise ValueError("rank must satisfy 0 < r < min(m, n)")
    rng = make_rng(seed)
    a = rng.standard_normal((m, r))
    b = rng.standard_normal((r, n))
    return synthetic_from_factors(a, b)


def apply_mask(x, rho, seed):
    """Remove exactly ``round(rho * x.size)`` entries uniformly at random."""
    x = as_matrix(x)
    if not 0 <= rho < 1:
        raise ValueError("missing rate must lie in [0, 1)")
    n_missing = int(round(rho * x.size))
    if n_missing >= x.size:
        raise ValueError("missing rate leaves no observed entries")
    rng = make_rng(seed)
    missing = rng.choice(x.size, size=n_missing, replace=False)
    mask = np.ones(x.size)
    mask[missing] = 0.0
    mask = mask.reshape(x.shape)
    return ObservedMatrix.from_full(x, mask)


def image_to_matrix(image):
    """8-bit ``h x w x 3`` raster -> ``h x 3w`` matrix in [0, 1] (R | G | B)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise FormatError("expected an h x w x 3 RGB raster, got shape %s" % (img.shape,))
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255) or np.any(img != np.round(img)):
            raise FormatError("raster values must be 8-bit integers")
        img = img.astype(np.uint8)
    return np.hstack([img[:, :, c] for c in range(3)]).astype(np.float64) / 255.0


def matrix_to_image(mat, dims=None):
    """Inverse of :func:`image_to_matrix`; clamps to [0, 1] and rounds half up."""
    mat = np.asarray(mat, dtype=np.float64)
    h, w3 = mat.shape
    if w3 % 3:
        raise FormatError("matrix width %d is not a multiple of 3" % w3)
    w = w3 // 3
    if dims is not None and tuple(dims)[:2] != (h, w):
        raise FormatError("matrix %s does not match image dims %s" % (mat.shape, dims))
    vals = np.floor(np.clip(mat, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return np.stack([vals[:, c * w:(c + 1) * w] for c in range(3)], axis=2)


def load_image(path):
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise FormatError("%s is %s, expected 8-bit RGB" % (path, im.mode))
            return np.array(im)
    except OSError as exc:
        raise FormatError("cannot read image %s: %s" % (path, exc)) from exc


def save_image(raster, path):
    from PIL import Image

    Image.fromarray(np.asarray(raster, dtype=np.uint8), mode="RGB").save(path)


def save_matrix_csv(mat, path):
    np.savetxt(path, np.asarray(mat, dtype=np.float64), delimiter=",", fmt="%.17g")


def load_matrix_csv(path):
    try:
        mat = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    except ValueError as exc:
        raise FormatError("cannot parse matrix CSV %s: %s" % (path, exc)) from exc
    if not np.all(np.isfinite(mat)):
        raise FormatError("matrix CSV %s holds non-finite values" % path)
    return mat


@dataclass
class RatingsTable:
    """``(user, item, rating)`` triples with 0-based indices."""

    rows: int
    cols: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __len__(self):
        return len(self.ratings)

    def triples(self):
        return list(zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()))


def parse_movielens(path, fmt=ML100K):
    """Read ``u.data`` (tab) or ``ratings.dat`` (``::``) into a RatingsTable.

    Timestamps are discarded; ids are converted to 0-based indices.
    """
    if fmt not in MOVIELENS_FORMATS:
        raise ValueError("unknown MovieLens format %r" % fmt)
    rows, cols, sep = MOVIELENS_FORMATS[fmt]
    users, items, ratings = [], [], []
    seen = set()
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(sep) if sep != "\t" else line.split()
            if len(fields) != 4:
                raise ParseError("expected 4 fields, got %d" % len(fields), lineno)
            try:
                u, i = int(fields[0]) - 1, int(fields[1]) - 1
                r = float(fields[2])
                int(fields[3])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            if not 1 <= r <= 5:
                raise ValidationError("line %d: rating %g outside [1, 5]" % (lineno, r))
            if not (0 <= u < rows and 0 <= i < cols):
                raise ParseError("user/item id out of range", lineno)
            if (u, i) in seen:
                raise ParseError("duplicate (user, item) pair", lineno)
            seen.add((u, i))
            users.append(u)
            items.append(i)
            ratings.append(r)
    return RatingsTable(rows, cols, np.array(users, dtype=np.int64),
                        np.array(items, dtype=np.int64), np.array(ratings, dtype=np.float64))


def split_ratings(table, train_fraction, seed):
    """Uniform split of the observed ratings.

    Returns the training ObservedMatrix (users x items) and the held-out
    ratings as ``(users, items, ratings)`` arrays.
    """
    if len(table) == 0:
        raise ValueError("empty ratings table")
    if not 0 < train_fraction <= 1:
        raise ValueError("train fraction must lie in (0, 1]")
    rng = make_rng(seed)
    perm = rng.permutation(len(table))
    n_train = int(round(train_fraction * len(table)))
    tr, te = perm[:n_train], perm[n_train:]
    data = np.zeros((table.rows, table.cols))
    mask = np.zeros((table.rows, table.cols))
    data[table.users[tr], table.items[tr]] = table.ratings[tr]
    mask[table.users[tr], table.items[tr]] = 1.0
    holdout = (table.users[te], table.items[te], table.ratings[te])
    return ObservedMatrix(data, mask), holdout
