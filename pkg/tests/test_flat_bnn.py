import math

import numpy as np
import pandas as pd
import pytest

from checkpoints import load_checkpoint
from datasets import load_dataset
from evaluation import PosteriorSampler, evaluate
from flat_bnn import get_split, main
from flatness import make_bound_inputs, pac_bayes_bound_term
from models import GaussianPosterior


DATA = 'two-moons:n=100,noise=0.1,seed=0'


def run(argv):
    """Run the CLI; return its exit status."""
    try:
        main([str(a) for a in argv])
    except SystemExit as e:
        return e.code
    return 0


def train_args(out, *extra):
    return ['train', '--data', DATA, '--arch', '2-8-2', '--epochs', 3,
            '--out', out, '--disable-progress', *extra]


def records(text):
    """Parse ``key<TAB>value`` lines."""
    return dict(line.split('\t', 1) for line in text.splitlines()
                if '\t' in line)


class TestTrain:
    def test_geometry_checkpoint(self, tmp_path, capsys):
        out = tmp_path / 'sgvb.json'
        status = run(['train', '--method', 'sgvb', '--flat', '--geometry',
                      'mu-over-sigma', '--rho', '5e-4', '--data',
                      'two-moons:n=400,noise=0.2', '--seed', 1, '--epochs', 2,
                      '--out', out, '--disable-progress'])
        assert status == 0
        ckpt = load_checkpoint(out)
        assert isinstance(ckpt.payload, GaussianPosterior)
        assert ckpt.config.flat
        assert ckpt.config.geometry == 'mu-over-sigma'
        assert ckpt.config.rho == 5e-4
        assert 'Checkpoint written' in capsys.readouterr().out

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / 'a.json', tmp_path / 'b.json'
        assert run(train_args(a, '--method', 'swag', '--flat')) == 0
        assert run(train_args(b, '--method', 'swag', '--flat')) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_radius_matches_baseline(self, tmp_path):
        a, b = tmp_path / 'a.json', tmp_path / 'b.json'
        assert run(train_args(a, '--method', 'sgvb')) == 0
        assert run(train_args(b, '--method', 'sgvb', '--flat', '--rho', 0)) == 0
        pa, pb = load_checkpoint(a).payload, load_checkpoint(b).payload
        np.testing.assert_allclose(pa.mu, pb.mu, rtol=0, atol=1e-12)
        np.testing.assert_allclose(pa.log_sigma, pb.log_sigma, rtol=0,
                                   atol=1e-12)

    def test_method_defaults(self, tmp_path):
        out = tmp_path / 'sgld.json'
        assert run(train_args(out, '--method', 'sgld', '--flat')) == 0
        config = load_checkpoint(out).config
        assert config.rho == 0.05
        assert config.learning_rate == 1e-4

    def test_geometry_fallback_warning(self, tmp_path, capsys):
        out = tmp_path / 'swag.json'
        assert run(train_args(out, '--method', 'swag-diag', '--flat',
                              '--geometry', 'mu-over-sigma')) == 0
        assert 'WARNING' in capsys.readouterr().err
        assert len(load_checkpoint(out).warnings) == 1

    def test_config_file(self, tmp_path):
        config = tmp_path / 'config.yaml'
        config.write_text('method: mc-dropout\nflat: true\nkeep-prob: 0.8\n'
                          'epochs: 100\n')
        out = tmp_path / 'ckpt.json'
        # Command-line flags take precedence over the file.
        assert run(train_args(out, '--config', config)) == 0
        ckpt = load_checkpoint(out)
        assert ckpt.method == 'mc-dropout'
        assert ckpt.config.keep_prob == 0.8
        assert ckpt.config.epochs == 3

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / 'config.yaml'
        config.write_text('optimizer: adam\n')
        assert run(train_args(tmp_path / 'ckpt.json', '--config', config)) == 1

    def test_missing_data(self, tmp_path):
        assert run(['train', '--out', tmp_path / 'ckpt.json']) == 1

    def test_bad_method(self, tmp_path):
        assert run(train_args(tmp_path / 'ckpt.json', '--method', 'hmc')) == 1

    def test_bad_data_source(self, tmp_path):
        assert run(['train', '--data', 'spirals:n=10', '--out',
                    tmp_path / 'ckpt.json']) == 1

    def test_architecture_mismatch(self, tmp_path):
        assert run(['train', '--data', DATA, '--arch', '3-8-2', '--out',
                    tmp_path / 'ckpt.json']) == 1

    def test_no_arguments(self, capsys):
        assert run([]) == 1


class TestEval:
    @pytest.fixture
    def checkpoint(self, tmp_path):
        out = tmp_path / 'ckpt.json'
        assert run(train_args(out, '--method', 'deep-ensemble', '--flat')) == 0
        return out

    def test_report(self, checkpoint, tmp_path, capsys):
        capsys.readouterr()
        csv = tmp_path / 'reliability.csv'
        assert run(['eval', checkpoint, '--reliability-out', csv,
                    '--ece-bins', 10]) == 0
        out = records(capsys.readouterr().out)
        assert out['method'] == 'deep-ensemble'
        assert out['samples'] == '3'
        assert 0 <= float(out['accuracy']) <= 1
        assert len(pd.read_csv(csv)) == 10

    def test_matches_library_call(self, checkpoint, capsys):
        capsys.readouterr()
        assert run(['eval', checkpoint, '--split', 'train', '--n-samples',
                    5]) == 0
        out = records(capsys.readouterr().out)

        ckpt = load_checkpoint(checkpoint)
        train_set = get_split(load_dataset(DATA), ckpt.data, 'train')
        sampler = PosteriorSampler(ckpt.method, ckpt.payload, ckpt.spec)
        report = evaluate(sampler, train_set.features, train_set.labels, 5,
                          np.random.default_rng(0))
        assert out['accuracy'] == f'{report.accuracy:.9g}'
        assert out['nll'] == f'{report.nll:.9g}'

    def test_reproducible(self, checkpoint, tmp_path, capsys):
        capsys.readouterr()
        a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
        assert run(['eval', checkpoint, '--reliability-out', a]) == 0
        first = capsys.readouterr().out
        assert run(['eval', checkpoint, '--reliability-out', b]) == 0
        second = capsys.readouterr().out
        assert a.read_bytes() == b.read_bytes()
        assert first.replace(str(a), '') == second.replace(str(b), '')

    def test_sharpness_and_eigenvalues(self, checkpoint, capsys):
        capsys.readouterr()
        assert run(['eval', checkpoint, '--sharpness', '--sharpness-steps', 3,
                    '--eigs', 2, '--eig-iters', 20]) == 0
        out = records(capsys.readouterr().out)
        assert float(out['sharpness']) >= 0
        assert float(out['lambda_1']) >= float(out['lambda_2'])
        assert 'lambda_1/lambda_2' in out

    def test_swa_needs_swag(self, checkpoint):
        assert run(['eval', checkpoint, '--swa']) == 1

    def test_missing_checkpoint(self, tmp_path):
        assert run(['eval', tmp_path / 'missing.json']) == 2


class TestSharpness:
    def test_mean_of_printed_values(self, tmp_path, capsys):
        out = tmp_path / 'ckpt.json'
        assert run(train_args(out, '--method', 'sgvb')) == 0
        capsys.readouterr()
        assert run(['sharpness', out, '--samples', 3, '--steps', 3]) == 0
        values = records(capsys.readouterr().out)
        models = [float(values[f'model {i}']) for i in range(1, 4)]
        assert float(values['mean']) == pytest.approx(np.mean(models),
                                                      rel=1e-8)
        assert all(v >= 0 for v in models)


class TestBound:
    def test_reference_value(self, capsys):
        assert run(['bound', '--k', 1, '--n', 2, '--R', 1, '--rho', 1,
                    '--delta', 1]) == 0
        out = records(capsys.readouterr().out)
        expected = pac_bayes_bound_term(make_bound_inputs(1, 2, 1.0, 1.0, 1.0))
        assert float(out['bound term']) == expected
        assert float(out['bound term']) == pytest.approx(1.7715, abs=1e-3)

    def test_full_bound(self, capsys):
        assert run(['bound', '--k', 10, '--n', 1000, '--R', 1, '--rho', 0.05,
                    '--empirical-sa-loss', 0.3, '--empirical-loss',
                    0.2]) == 0
        out = records(capsys.readouterr().out)
        assert float(out['bound']) == pytest.approx(
            0.5 + float(out['bound term']))

    def test_too_few_examples(self):
        assert run(['bound', '--k', 1, '--n', 1, '--R', 1, '--rho', 1]) == 1


class TestGibbs:
    def write_grid(self, tmp_path, text):
        path = tmp_path / 'grid.csv'
        path.write_text(text)
        return path

    def test_two_points(self, tmp_path, capsys):
        grid = self.write_grid(
            tmp_path, f'point,loss\na,0\nb,{math.log(2)!r}\n')
        out_csv = tmp_path / 'out.csv'
        assert run(['gibbs', grid, '--lambda', 1, '--out', out_csv]) == 0
        out = records(capsys.readouterr().out)
        assert float(out['total variation']) <= 2e-3
        df = pd.read_csv(out_csv)
        np.testing.assert_allclose(df['closed_form'], [2 / 3, 1 / 3],
                                   atol=1e-12)

    def test_no_likelihood(self, tmp_path):
        grid = self.write_grid(tmp_path,
                               'point,loss,prior\na,0,1\nb,2,3\n')
        out_csv = tmp_path / 'out.csv'
        assert run(['gibbs', grid, '--lambda', 0, '--out', out_csv]) == 0
        df = pd.read_csv(out_csv)
        np.testing.assert_allclose(df['closed_form'], [0.25, 0.75],
                                   atol=1e-12)

    def test_single_point(self, tmp_path):
        grid = self.write_grid(tmp_path, 'point,loss\na,1.5\n')
        out_csv = tmp_path / 'out.csv'
        assert run(['gibbs', grid, '--out', out_csv]) == 0
        df = pd.read_csv(out_csv)
        assert df['closed_form'].tolist() == [1.0]
        assert df['oracle'].tolist() == [1.0]

    def test_sharpness_aware(self, tmp_path, capsys):
        grid = self.write_grid(
            tmp_path, 'point,loss,x0\na,0,0\nb,1,0.1\nc,0.2,0.2\nd,0.1,0.5\n')
        assert run(['gibbs', grid, '--rho', 0.1, '--lambda', 2]) == 0
        out = records(capsys.readouterr().out)
        assert float(out['total variation']) <= 2e-3

    def test_rho_needs_coordinates(self, tmp_path):
        grid = self.write_grid(tmp_path, 'point,loss\na,0\nb,1\n')
        assert run(['gibbs', grid, '--rho', 0.1]) == 1

    def test_oracle_limit(self, tmp_path):
        grid = self.write_grid(
            tmp_path, 'point,loss\na,0\nb,1\nc,2\nd,3\ne,4\n')
        assert run(['gibbs', grid]) == 2
        assert run(['gibbs', grid, '--no-oracle']) == 0
