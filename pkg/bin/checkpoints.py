"""Versioned, canonical checkpoint files.

A checkpoint is UTF-8 JSON with sorted keys, no insignificant whitespace and
floats in shortest round-trip form, so saving a loaded checkpoint reproduces
the original bytes. Top-level keys:

- format_version  --  integer, currently 1
- method  --  training method tag
- config  --  the TrainConfig used
- spec  --  MLP widths and activations
- data  --  data source, split settings and the dataset fingerprint
- seed  --  run seed
- payload  --  trained posterior; ``kind`` is one of ``gaussian``, ``swag``,
  ``particles`` or ``params_list``
- warnings  --  warnings raised while training
"""
from collections import namedtuple
import json
from pathlib import Path

import numpy as np

from models import FlatParams, GaussianPosterior, make_mlp_spec, mlp_layout
from trainers import ParticleSet, SwagStats, TrainConfig, VALID_METHODS


FORMAT_VERSION = 1

PAYLOAD_KINDS = {
    'sgvb': 'gaussian',
    'sgvb-lrt': 'gaussian',
    'swag': 'swag',
    'swag-diag': 'swag',
    'sgld': 'particles',
    'mc-dropout': 'params_list',
    'deep-ensemble': 'params_list'}


class CheckpointError(ValueError):
    pass


Checkpoint = namedtuple(
    'Checkpoint',
    ['format_version', 'method', 'config', 'spec', 'data', 'seed', 'payload',
     'warnings'],
    defaults=((),))


def _floats(x):
    return np.asarray(x, dtype=np.float64).tolist()


def encode_payload(method, payload):
    kind = PAYLOAD_KINDS[method]
    if kind == 'gaussian':
        return {'kind': kind, 'mu': _floats(payload.mu),
                'log_sigma': _floats(payload.log_sigma)}
    if kind == 'swag':
        return {'kind': kind, 'count': payload.count, 'rank': payload.rank,
                'mean': _floats(payload.mean),
                'sq_mean': _floats(payload.sq_mean),
                'deviations': [_floats(d) for d in payload.deviations]}
    if kind == 'particles':
        return {'kind': kind, 'steps': list(payload.steps),
                'particles': [_floats(p.values) for p in payload.particles]}
    members = [payload] if method == 'mc-dropout' else payload
    return {'kind': kind, 'params': [_floats(p.values) for p in members]}


def decode_payload(method, spec, d):
    kind = PAYLOAD_KINDS[method]
    if d.get('kind') != kind:
        raise CheckpointError(
            f'payload kind "{d.get("kind")}" does not match method '
            f'"{method}" (expected "{kind}")')
    layout = mlp_layout(spec)
    if kind == 'gaussian':
        return GaussianPosterior(d['mu'], d['log_sigma'], layout)
    if kind == 'swag':
        stats = SwagStats(layout, d['rank'])
        stats.count = d['count']
        stats.mean = np.asarray(d['mean'], dtype=np.float64)
        stats.sq_mean = np.asarray(d['sq_mean'], dtype=np.float64)
        stats.deviations = [np.asarray(v, dtype=np.float64)
                            for v in d['deviations']]
        return stats
    if kind == 'particles':
        if not d['particles']:
            raise CheckpointError('particle set is empty')
        return ParticleSet([FlatParams(p, layout) for p in d['particles']],
                           list(d['steps']))
    members = [FlatParams(p, layout) for p in d['params']]
    if method == 'mc-dropout':
        if len(members) != 1:
            raise CheckpointError(
                f'MC-dropout checkpoint holds {len(members)} models')
        return members[0]
    return members


def to_dict(ckpt):
    return {
        'format_version': ckpt.format_version,
        'method': ckpt.method,
        'config': dict(ckpt.config._asdict()),
        'spec': {'widths': list(ckpt.spec.widths),
                 'activations': list(ckpt.spec.activations)},
        'data': dict(ckpt.data),
        'seed': ckpt.seed,
        'payload': encode_payload(ckpt.method, ckpt.payload),
        'warnings': list(ckpt.warnings)}


def checkpoint_bytes(ckpt):
    """Canonical serialisation of ``ckpt``."""
    text = json.dumps(to_dict(ckpt), sort_keys=True, separators=(',', ':'),
                      allow_nan=False, ensure_ascii=False)
    return (text + '\n').encode('utf-8')


def save_checkpoint(ckpt, path):
    with open(Path(path), 'wb') as f:
        f.write(checkpoint_bytes(ckpt))


def from_dict(d):
    version = d.get('format_version')
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f'unsupported checkpoint format version {version}; expected '
            f'{FORMAT_VERSION}')
    method = d.get('method')
    if method not in VALID_METHODS:
        raise CheckpointError(f'unknown method "{method}" in checkpoint')
    try:
        config = TrainConfig(**d['config'])
        spec = make_mlp_spec(d['spec']['widths'], d['spec']['activations'])
        payload = decode_payload(method, spec, d['payload'])
        return Checkpoint(version, method, config, spec, d['data'], d['seed'],
                          payload, tuple(d.get('warnings', ())))
    except (KeyError, TypeError) as e:
        raise CheckpointError(f'malformed checkpoint: {e!r}')


def load_checkpoint(path):
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f'"{path}" is not valid JSON: {e}')
    return from_dict(d)
