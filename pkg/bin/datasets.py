"""Desk-scale classification datasets.

Datasets are either generated (two moons, Gaussian blobs) or read from CSV
files with one example per row and an integer label in the last column::

    x0,x1,label
    0.25,-1.5,0
    1.0,0.75,1

Canonical CSV bytes (no header, shortest round-trip decimals, ``\\n`` line
endings) are what the dataset fingerprint hashes.
"""
from collections import namedtuple
from pathlib import Path
import re

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError
from sklearn.datasets import make_blobs, make_moons
from sklearn.model_selection import train_test_split


STD_FLOOR = 1e-8
VALID_GENERATORS = {'two-moons', 'blobs'}

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3
MASK_64 = 0xFFFFFFFFFFFFFFFF


class DataError(ValueError):
    """Malformed dataset; ``row`` is the 1-indexed file line if known."""
    def __init__(self, msg, row=None):
        self.row = row
        if row is not None:
            msg = f'row {row}: {msg}'
        super(DataError, self).__init__(msg)


Dataset = namedtuple(
    'Dataset', ['features', 'labels', 'n_classes', 'feat_mean', 'feat_std'],
    defaults=(None, None))

Fingerprint = namedtuple('Fingerprint', ['n', 'd', 'n_classes', 'hash'])


def make_dataset(features, labels, n_classes=None):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise DataError(
            f'{labels.size} labels for features of shape {features.shape}')
    if not np.all(np.isfinite(features)):
        raise DataError('features must be finite')
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f'labels must lie in [0, {n_classes})')
    return Dataset(features, labels, int(n_classes))


def gen_two_moons(n=400, noise_std=0.2, seed=0):
    """Two interleaving half circles of radius 1, ``n/2`` points each.

    Class 0 is the upper moon centred on the origin; class 1 is the flipped
    moon, shifted. Isotropic Gaussian noise of std ``noise_std`` is added.
    """
    if n < 2 or n % 2:
        raise ValueError(f'n must be even and >= 2, got {n}')
    if noise_std < 0:
        raise ValueError(f'noise_std must be non-negative, got {noise_std}')
    X, y = make_moons(n_samples=n, noise=noise_std, random_state=seed)
    return make_dataset(X, y, 2)


def gen_gaussian_blobs(n=300, centers=3, spread=0.5, seed=0,
                       return_centers=False):
    """Isotropic Gaussian clusters in 2-D, one class per center.

    Cluster sizes differ by at most one point. Centers are drawn uniformly
    from ``[-10, 10]^2`` by the generator.
    """
    if centers < 2:
        raise ValueError(f'need at least 2 centers, got {centers}')
    if n < centers:
        raise ValueError(f'cannot split {n} points over {centers} centers')
    if spread < 0:
        raise ValueError(f'spread must be non-negative, got {spread}')
    counts = [n // centers + (1 if i < n % centers else 0)
              for i in range(centers)]
    X, y, means = make_blobs(
        n_samples=counts, n_features=2, centers=None, cluster_std=spread,
        random_state=seed, return_centers=True)
    dataset = make_dataset(X, y, centers)
    if return_centers:
        return dataset, means
    return dataset


def _parse_numbers(col, first_row, what, integral=False):
    values = pd.to_numeric(col, errors='coerce').to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if integral:
        bad |= np.isfinite(values) & (values != np.round(values))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f'invalid {what} "{col.iloc[i]}"', first_row + i)
    return values


def load_csv(path, has_header=True, label_column_last=True, n_classes=None):
    """Load a dataset from a CSV file.

    Parameters
    ----------
    path : Path
        CSV file: comma separated, '.' decimal point, integer labels.

    has_header : bool, optional
        Skip the first line.
        (Default: True)

    label_column_last : bool, optional
        Label in the last column; otherwise in the first.
        (Default: True)

    n_classes : int, optional
        Number of classes. Inferred as ``max(label) + 1`` if omitted.

    Returns
    -------
    Dataset
        Parsed dataset.

    Raises
    ------
    DataError
        On ragged rows, non-numeric or non-finite cells and out-of-range
        labels, naming the offending file line.
    """
    path = Path(path)
    first_row = 2 if has_header else 1
    try:
        df = pd.read_csv(
            path, header=None, skiprows=1 if has_header else 0, dtype=str,
            keep_default_na=False, skip_blank_lines=True)
    except EmptyDataError:
        raise DataError(f'no rows in "{path}"')
    except ParserError as e:
        m = re.search(r'line (\d+)', str(e))
        row = int(m.group(1)) + first_row - 1 if m else None
        raise DataError('ragged row', row)
    if df.shape[1] < 2:
        raise DataError(f'need at least one feature and a label in "{path}"')
    missing = df.isna().any(axis=1).to_numpy()
    if missing.any():
        raise DataError('ragged row', first_row + int(np.flatnonzero(missing)[0]))

    label_col = df.shape[1] - 1 if label_column_last else 0
    feat_cols = [c for c in range(df.shape[1]) if c != label_col]
    features = np.column_stack([
        _parse_numbers(df[c], first_row, 'feature') for c in feat_cols])
    labels = _parse_numbers(df[label_col], first_row, 'label', integral=True)
    out_of_range = labels < 0
    if n_classes is not None:
        out_of_range |= labels >= n_classes
    if out_of_range.any():
        i = int(np.flatnonzero(out_of_range)[0])
        raise DataError(f'label {int(labels[i])} out of range', first_row + i)
    return make_dataset(features, labels.astype(np.int64), n_classes)


def canonical_csv_bytes(dataset):
    """UTF-8 CSV bytes of ``dataset``; floats in shortest round-trip form."""
    lines = []
    for x, label in zip(dataset.features, dataset.labels):
        cells = [repr(float(v)) for v in x] + [str(int(label))]
        lines.append(','.join(cells) + '\n')
    return ''.join(lines).encode('utf-8')


def save_csv(dataset, path, header=True):
    path = Path(path)
    data = canonical_csv_bytes(dataset)
    if header:
        d = dataset.features.shape[1]
        names = [f'x{i}' for i in range(d)] + ['label']
        data = (','.join(names) + '\n').encode('utf-8') + data
    with open(path, 'wb') as f:
        f.write(data)


def fnv1a_64(data):
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK_64
    return h


def fingerprint(dataset):
    n, d = dataset.features.shape
    h = fnv1a_64(canonical_csv_bytes(dataset))
    return Fingerprint(int(n), int(d), int(dataset.n_classes), f'{h:016x}')


def split_indices(n, train_fraction=0.8, seed=0):
    """Deterministic shuffled train/test indices; neither side may be empty.

    The training side gets ``round(train_fraction * n)`` examples.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(
            f'train_fraction must lie in (0, 1), got {train_fraction}')
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(
            f'splitting {n} examples at {train_fraction} leaves an empty '
            f'{"train" if n_train == 0 else "test"} set')
    return train_test_split(
        np.arange(n), train_size=n_train, random_state=seed, shuffle=True)


def normalize(dataset, idx, mean, std):
    """Rows ``idx`` of ``dataset`` standardised with the given statistics."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    return Dataset((dataset.features[idx] - mean) / std, dataset.labels[idx],
                   dataset.n_classes, mean, std)


def split_normalize(dataset, train_fraction=0.8, seed=0):
    """Shuffle, split and standardise a dataset.

    Mean and std (floored at 1e-8) are computed on the training split only and
    applied to both splits; they are stored on both returned datasets.

    Returns
    -------
    train, test : Dataset
    """
    train_idx, test_idx = split_indices(
        len(dataset.labels), train_fraction, seed)
    X = dataset.features[train_idx]
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return (normalize(dataset, train_idx, mean, std),
            normalize(dataset, test_idx, mean, std))


def parse_data_source(text):
    """Parse ``name:key=value,...`` into ``(name, kwargs)``.

    A bare path ending in ``.csv`` is shorthand for ``csv:path=PATH``.
    """
    if ':' not in text and text.endswith('.csv'):
        return 'csv', {'path': text}
    name, _, rest = text.partition(':')
    kwargs = {}
    for item in filter(None, rest.split(',')):
        key, sep, value = item.partition('=')
        if not sep:
            raise ValueError(f'malformed data option "{item}" in "{text}"')
        kwargs[key.strip()] = value.strip()
    if name not in VALID_GENERATORS | {'csv'}:
        raise ValueError(
            f'Unrecognized data source "{name}". Valid sources: '
            f'{sorted(VALID_GENERATORS | {"csv"})}.')
    return name, kwargs


def load_dataset(text):
    """Build the dataset named by a data source string.

    Examples: ``two-moons:n=400,noise=0.2,seed=0``,
    ``blobs:n=300,centers=3,spread=0.5,seed=0``, ``csv:path=data.csv,header=1``
    or ``data.csv``.
    """
    name, kwargs = parse_data_source(text)
    if name == 'two-moons':
        _check_keys(name, kwargs, {'n', 'noise', 'seed'})
        return gen_two_moons(
            int(kwargs.get('n', 400)), float(kwargs.get('noise', 0.2)),
            int(kwargs.get('seed', 0)))
    if name == 'blobs':
        _check_keys(name, kwargs, {'n', 'centers', 'spread', 'seed'})
        return gen_gaussian_blobs(
            int(kwargs.get('n', 300)), int(kwargs.get('centers', 3)),
            float(kwargs.get('spread', 0.5)), int(kwargs.get('seed', 0)))
    _check_keys(name, kwargs, {'path', 'header', 'label_last'})
    if 'path' not in kwargs:
        raise ValueError(f'csv source needs a path: "{text}"')
    return load_csv(kwargs['path'],
                    has_header=kwargs.get('header', '1') != '0',
                    label_column_last=kwargs.get('label_last', '1') != '0')


def _check_keys(name, kwargs, known):
    unknown = set(kwargs) - known
    if unknown:
        raise ValueError(
            f'unknown options {sorted(unknown)} for data source "{name}"; '
            f'valid options: {sorted(known)}')
