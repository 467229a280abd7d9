import json

import numpy as np
import pytest

from checkpoints import (Checkpoint, CheckpointError, FORMAT_VERSION,
                         checkpoint_bytes, load_checkpoint, save_checkpoint)
from models import init_params, init_posterior, make_mlp_spec, mlp_layout
from trainers import ParticleSet, SwagStats, make_train_config


SPEC = make_mlp_spec([2, 4, 2])
DATA = {'source': 'two-moons:n=40', 'kind': 'two-moons', 'n': 40, 'd': 2,
        'n_classes': 2, 'hash': '0123456789abcdef', 'train_fraction': 0.8,
        'split_seed': 0, 'feat_mean': [0.1, 0.2], 'feat_std': [1.0, 0.5]}


def make_payload(method, rng):
    if method in {'sgvb', 'sgvb-lrt'}:
        return init_posterior(SPEC, rng, -3.0)
    if method in {'swag', 'swag-diag'}:
        stats = SwagStats(mlp_layout(SPEC), rank=2)
        for _ in range(3):
            stats.collect(rng.standard_normal(22))
        return stats
    if method == 'sgld':
        return ParticleSet([init_params(SPEC, rng) for _ in range(3)],
                           [10, 20, 30])
    if method == 'mc-dropout':
        return init_params(SPEC, rng)
    return [init_params(SPEC, rng) for _ in range(2)]


def make_checkpoint(method, rng, **kwargs):
    config = make_train_config(method=method, rho=1 / 3, **kwargs)
    return Checkpoint(FORMAT_VERSION, method, config, SPEC, DATA, config.seed,
                      make_payload(method, rng), ('some warning',))


class TestRoundTrip:
    @pytest.mark.parametrize('method', [
        'sgvb', 'sgvb-lrt', 'sgld', 'swag', 'swag-diag', 'mc-dropout',
        'deep-ensemble'])
    def test_byte_identical(self, method, rng, tmp_path):
        ckpt = make_checkpoint(method, rng)
        first = tmp_path / 'first.json'
        second = tmp_path / 'second.json'
        save_checkpoint(ckpt, first)
        loaded = load_checkpoint(first)
        save_checkpoint(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert loaded.config == ckpt.config
        assert loaded.spec == ckpt.spec
        assert loaded.warnings == ('some warning',)

    def test_payload_values(self, rng, tmp_path):
        ckpt = make_checkpoint('sgvb', rng)
        save_checkpoint(ckpt, tmp_path / 'ckpt.json')
        loaded = load_checkpoint(tmp_path / 'ckpt.json')
        assert np.array_equal(loaded.payload.mu, ckpt.payload.mu)
        assert np.array_equal(loaded.payload.log_sigma,
                              ckpt.payload.log_sigma)

    def test_canonical_form(self, rng):
        data = checkpoint_bytes(make_checkpoint('mc-dropout', rng))
        text = data.decode('utf-8')
        assert text.endswith('\n')
        assert ': ' not in text and ', ' not in text
        d = json.loads(text)
        assert list(d) == sorted(d)
        assert d['format_version'] == FORMAT_VERSION
        assert d['payload']['kind'] == 'params_list'
        assert len(d['payload']['params']) == 1


class TestErrors:
    def write(self, tmp_path, d):
        path = tmp_path / 'ckpt.json'
        path.write_text(json.dumps(d))
        return path

    def test_version_mismatch(self, rng, tmp_path):
        d = json.loads(checkpoint_bytes(make_checkpoint('sgvb', rng)))
        d['format_version'] = FORMAT_VERSION + 1
        with pytest.raises(CheckpointError):
            load_checkpoint(self.write(tmp_path, d))

    def test_kind_mismatch(self, rng, tmp_path):
        d = json.loads(checkpoint_bytes(make_checkpoint('sgvb', rng)))
        d['method'] = 'sgld'
        with pytest.raises(CheckpointError):
            load_checkpoint(self.write(tmp_path, d))

    def test_missing_field(self, rng, tmp_path):
        d = json.loads(checkpoint_bytes(make_checkpoint('swag', rng)))
        del d['payload']['mean']
        with pytest.raises(CheckpointError):
            load_checkpoint(self.write(tmp_path, d))

    def test_not_json(self, tmp_path):
        path = tmp_path / 'ckpt.json'
        path.write_text('{not json')
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
