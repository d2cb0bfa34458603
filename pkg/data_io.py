"""!@file data_io.py
@brief Matrix files, image patches, preprocessing, sample streams and planted synthetic data.
@details Matrices are stored column-major in meaning (one signal per column) in one of two formats:
- binary: the 8-byte magic OMF_MAGIC, rows and cols as little-endian uint64, then rows*cols little-endian float64
  values in row-major order;
- text: a "rows cols" header line followed by the values, one matrix row per line, written with 17 significant
  digits.
Every loader error is reported as MatrixFormatError. Images are 8- or 16-bit PGM (P5) and PPM (P6) rasters.
@version 0.1.0
@date_created 2025-03-24
@date_modified 2025-04-02
@author Leland Green
@license MIT
"""
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from dictionary_update import Dictionary

OMF_MAGIC = b"OMFMAT\x00\x01"
HEADER_SIZE = len(OMF_MAGIC) + 16
SUPPORTED_RASTERS = (".pgm", ".ppm", ".pnm")


class MatrixFormatError(ValueError):
    """!@brief A matrix file is truncated, has a bad header, a size mismatch or non-finite values."""


class RasterFormatError(ValueError):
    """!@brief An image is not a readable binary PGM/PPM raster."""


@dataclass(frozen=True)
class PatchSpec:
    """!@brief Square patches of edge x edge pixels, sampled on a grid with the given stride."""
    edge: int = 8
    stride: int = 1
    channels: int = 1

    def __post_init__(self):
        if self.edge < 1 or self.stride < 1:
            raise ValueError(f"Patch edge and stride must be >= 1, got {self.edge}, {self.stride}.")
        if self.channels not in (1, 3):
            raise ValueError(f"Patch channels must be 1 or 3, got {self.channels}.")

    @property
    def dimension(self) -> int:
        return self.edge * self.edge * self.channels


def save_matrix(matrix, path, text: bool = False):
    """!
    @brief Writes a matrix (a vector is written as one column).
    @param matrix 2-D array of finite values.
    @param path Output file.
    @param text Write the text format instead of the binary one.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError(f"Only 1-D or 2-D arrays can be saved, got shape {M.shape}.")
    if not np.all(np.isfinite(M)):
        raise ValueError("Refusing to save a matrix with non-finite values.")
    rows, cols = M.shape
    if text:
        with open(path, "w") as f:
            f.write(f"{rows} {cols}\n")
            np.savetxt(f, M, fmt="%.17g")
    else:
        with open(path, "wb") as f:
            f.write(OMF_MAGIC)
            f.write(np.array([rows, cols], dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def parse_matrix(data: bytes) -> np.ndarray:
    """!@brief Decodes the bytes of a matrix file in either format."""
    if not data:
        raise MatrixFormatError("Empty matrix file: missing header.")
    if data.startswith(OMF_MAGIC):
        if len(data) < HEADER_SIZE:
            raise MatrixFormatError("Truncated binary header.")
        rows, cols = (int(v) for v in np.frombuffer(data[len(OMF_MAGIC):HEADER_SIZE], dtype="<u8"))
        payload = data[HEADER_SIZE:]
        if rows < 1 or cols < 1:
            raise MatrixFormatError(f"Matrix header has an empty shape {rows} x {cols}.")
        if len(payload) != rows * cols * 8:
            raise MatrixFormatError(f"Header says {rows} x {cols} but the payload has {len(payload)} bytes.")
        M = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)
    else:
        try:
            tokens = data.decode("ascii").split()
        except UnicodeDecodeError as e:
            raise MatrixFormatError(f"Not a binary matrix and not ASCII text: {e}") from e
        if len(tokens) < 2:
            raise MatrixFormatError("Missing 'rows cols' header.")
        try:
            rows, cols = int(tokens[0]), int(tokens[1])
        except ValueError as e:
            raise MatrixFormatError(f"Bad 'rows cols' header: {tokens[0]!r} {tokens[1]!r}.") from e
        if rows < 1 or cols < 1:
            raise MatrixFormatError(f"Matrix header has an empty shape {rows} x {cols}.")
        if len(tokens) - 2 != rows * cols:
            raise MatrixFormatError(f"Header says {rows} x {cols} but the file has {len(tokens) - 2} values.")
        try:
            M = np.array(tokens[2:], dtype=float).reshape(rows, cols)
        except ValueError as e:
            raise MatrixFormatError(f"Unparseable value in matrix body: {e}") from e
    if not np.all(np.isfinite(M)):
        raise MatrixFormatError("Matrix contains non-finite values.")
    return M


def load_matrix(path) -> np.ndarray:
    """!@brief Reads a matrix file; the format is recognized from the leading magic bytes."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise MatrixFormatError(f"Cannot read matrix file {path}: {e}") from e
    return parse_matrix(data)


def load_vector(path) -> np.ndarray:
    """!@brief Reads a single-column (or single-row) matrix file as a vector."""
    M = load_matrix(path)
    if min(M.shape) != 1:
        raise MatrixFormatError(f"Expected a vector in {path}, got a {M.shape[0]} x {M.shape[1]} matrix.")
    return M.ravel()


def read_raster(path, channels: int | None = None) -> np.ndarray:
    """!
    @brief Reads a binary PGM (P5) or PPM (P6) image with values scaled to [0, 1].
    @param path Image file.
    @param channels Convert to 1 (gray) or 3 (RGB) channels; None keeps the file's own.
    @return H x W x C array.
    """
    try:
        with open(path, "rb") as f:
            magic = f.read(2)
    except OSError as e:
        raise RasterFormatError(f"Cannot read image {path}: {e}") from e
    if magic not in (b"P5", b"P6"):
        raise RasterFormatError(f"{path} is not a binary PGM/PPM image (magic {magic!r}).")
    try:
        with Image.open(path) as img:
            img.load()
            if channels == 1 and img.mode == "RGB":
                img = img.convert("L")
            elif channels == 3 and img.mode != "RGB":
                img = img.convert("RGB")
            wide = img.mode not in ("L", "RGB")
            pixels = np.asarray(img, dtype=float)
    except (OSError, UnidentifiedImageError, ValueError, SyntaxError, Image.DecompressionBombError) as e:
        raise RasterFormatError(f"Cannot decode image {path}: {e}") from e
    if pixels.size == 0:
        raise RasterFormatError(f"{path} has no pixels.")
    pixels /= 65535.0 if wide else 255.0
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    return np.clip(pixels, 0.0, 1.0)


def extract_patches(image, spec: PatchSpec, max_count: int | None = None, rng_seed=0) -> np.ndarray:
    """!
    @brief Samples patches from one image, each flattened channel-major into a column of length edge^2 * channels.
    @param image An image path or an H x W (x C) array with values in [0, 1].
    @param spec Patch geometry.
    @param max_count Upper bound on the number of patches; positions are drawn without replacement.
    @param rng_seed Seed or numpy Generator.
    @return m x n matrix with n = min(max_count, number of grid positions).
    """
    pixels = read_raster(image, spec.channels) if isinstance(image, (str, os.PathLike)) else np.asarray(image, float)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    if pixels.shape[2] != spec.channels:
        raise ValueError(f"Image has {pixels.shape[2]} channels, patches need {spec.channels}.")
    height, width = pixels.shape[:2]
    if spec.edge > height or spec.edge > width:
        raise ValueError(f"Patch edge {spec.edge} exceeds image size {height} x {width}.")
    rows = np.arange(0, height - spec.edge + 1, spec.stride)
    cols = np.arange(0, width - spec.edge + 1, spec.stride)
    total = rows.size * cols.size
    count = total if max_count is None else min(total, max_count)
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(total, size=count, replace=False)
    X = np.empty((spec.dimension, count))
    for i, p in enumerate(picks):
        r, c = rows[p // cols.size], cols[p % cols.size]
        X[:, i] = pixels[r:r + spec.edge, c:c + spec.edge, :].transpose(2, 0, 1).ravel()
    return X


def images_to_patches(paths, spec: PatchSpec, max_count: int | None = None, rng_seed=0) -> np.ndarray:
    """!@brief Patches from several images, split evenly, concatenated in file order."""
    paths = list(paths)
    if not paths:
        raise ValueError("No images given.")
    rng = np.random.default_rng(rng_seed)
    share = None if max_count is None else -(-max_count // len(paths))
    X = np.hstack([extract_patches(p, spec, share, rng) for p in paths])
    return X if max_count is None else X[:, :max_count]


def preprocess(X, center: bool = True, normalize: bool = True) -> np.ndarray:
    """!
    @brief Removes each column's mean, then scales each column to unit l2 norm.
    @details Columns that are (numerically) zero after centering are returned as exact zeros.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"Expected an m x n matrix, got shape {X.shape}.")
    scale = np.linalg.norm(X, axis=0)
    if center:
        X -= X.mean(axis=0)
    if normalize:
        norms = np.linalg.norm(X, axis=0)
        flat = norms <= 1e-10 * np.maximum(scale, 1.0)
        X[:, flat] = 0.0
        X[:, ~flat] /= norms[~flat]
    return X


def split_columns(X, test_fraction: float, rng_seed=0):
    """!@brief Random train/test split of the columns of X. Returns (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"Test fraction must lie in (0, 1), got {test_fraction}.")
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    n_test = min(max(1, int(round(test_fraction * n))), n - 1)
    if n_test < 1:
        raise ValueError(f"Cannot split {n} samples into train and test sets.")
    order = np.random.default_rng(rng_seed).permutation(n)
    return X[:, np.sort(order[n_test:])], X[:, np.sort(order[:n_test])]


class PermutedStream:
    """!
    @brief Endless stream over the columns of a matrix (or the items of a list), in a fresh uniform permutation
    each epoch.
    @details next_batch reports whether an epoch boundary was crossed, which the learner uses to rotate its purge
    buffers. The first epoch does not count as a boundary.
    """

    def __init__(self, items, rng_seed=0):
        self.items = items
        self.n = items.shape[1] if isinstance(items, np.ndarray) else len(items)
        if self.n < 1:
            raise ValueError("Cannot stream an empty sample source.")
        self.rng = np.random.default_rng(rng_seed)
        self.epoch = 0
        self.position = 0
        self.order = self.rng.permutation(self.n)

    def __len__(self):
        return self.n

    def __iter__(self):
        while True:
            batch, _ = self.next_batch(1)
            yield batch[:, 0] if isinstance(self.items, np.ndarray) else batch[0]

    def next_indices(self, size: int):
        if size < 1:
            raise ValueError(f"Batch size must be >= 1, got {size}.")
        picked = np.empty(size, dtype=int)
        boundary = False
        for i in range(size):
            if self.position == self.n:
                self.order = self.rng.permutation(self.n)
                self.position = 0
                self.epoch += 1
                boundary = True
            picked[i] = self.order[self.position]
            self.position += 1
        return picked, boundary

    def next_batch(self, size: int):
        """!@return (batch, epoch_started): an m x size matrix (or list of items) and the boundary flag."""
        picked, boundary = self.next_indices(size)
        if isinstance(self.items, np.ndarray):
            return self.items[:, picked], boundary
        return [self.items[i] for i in picked], boundary


def cycle_permuted(X, rng_seed=0) -> PermutedStream:
    """!@brief Stream over the columns of X in per-epoch permutations."""
    return PermutedStream(np.asarray(X, dtype=float), rng_seed)


def synth_planted(m: int, k: int, n: int, sparsity: int, noise: float = 0.0, rng_seed=0):
    """!
    @brief Signals built from a random planted dictionary: each column is a combination of `sparsity` random atoms
    with Gaussian coefficients, plus Gaussian noise of standard deviation `noise`.
    @return (X, Dictionary) with X of shape m x n.
    """
    if min(m, k, n) < 1 or not 1 <= sparsity <= k or noise < 0:
        raise ValueError(f"Invalid planted model m={m}, k={k}, n={n}, sparsity={sparsity}, noise={noise}.")
    rng = np.random.default_rng(rng_seed)
    atoms = rng.standard_normal((m, k))
    atoms /= np.linalg.norm(atoms, axis=0)
    codes = np.zeros((k, n))
    for i in range(n):
        support = rng.choice(k, size=sparsity, replace=False)
        codes[support, i] = rng.standard_normal(sparsity)
    X = atoms @ codes
    if noise > 0:
        X += noise * rng.standard_normal((m, n))
    return X, Dictionary(atoms)


def synth_grouped(m: int, k: int, groups: int, group_size: int, sparsity: int, noise: float = 0.0, rng_seed=0):
    """!@brief Groups of signals that share one random support of a planted dictionary. Returns (groups, Dictionary)."""
    if min(m, k, groups, group_size) < 1 or not 1 <= sparsity <= k or noise < 0:
        raise ValueError("Invalid grouped planted model.")
    rng = np.random.default_rng(rng_seed)
    atoms = rng.standard_normal((m, k))
    atoms /= np.linalg.norm(atoms, axis=0)
    result = []
    for _ in range(groups):
        codes = np.zeros((k, group_size))
        support = rng.choice(k, size=sparsity, replace=False)
        codes[support] = rng.standard_normal((sparsity, group_size))
        signals = atoms @ codes
        if noise > 0:
            signals += noise * rng.standard_normal(signals.shape)
        result.append(signals)
    return result, Dictionary(atoms)
