import json
import os

import pandas as pd
import pytest

from mesh_cli import main


def write_config(tmp_path, text):
    path = tmp_path / 'run.toml'
    path.write_text(text)
    return str(path)


@pytest.fixture
def fixture_config(tmp_path, fixtures_dir):
    return write_config(tmp_path, '[data]\nevents = "%s"\nroster = "%s"\n' % (
        os.path.join(fixtures_dir, 'events.csv'),
        os.path.join(fixtures_dir, 'roster.csv')))


def test_summarize_counts(tmp_path, capsys):
    out = tmp_path / 'run'
    assert main(['--out', str(out), 'summarize', '--counts', '1', '118',
                 '1']) == 0
    counts = json.loads((out / 'counts.json').read_text())
    assert counts['no_goals'] == 118
    assert counts['percent_no_goal'] == pytest.approx(98.33, abs=0.01)
    assert 'NoGoal' in capsys.readouterr().out
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['command'] == 'summarize'
    assert manifest['outputs'] == ['counts.json']


def test_summarize_file(tmp_path, fixture_config):
    out = tmp_path / 'run'
    assert main(['--config', fixture_config, '--out', str(out),
                 'summarize']) == 0
    counts = json.loads((out / 'counts.json').read_text())
    assert (counts['away_goals'], counts['no_goals'],
            counts['home_goals']) == (1, 1, 1)
    manifest = json.loads((out / 'manifest.json').read_text())
    assert len(manifest['inputs']) == 2


def test_gnet(tmp_path, fixtures_dir):
    out = tmp_path / 'run'
    ratings = os.path.join(fixtures_dir, 'published_ratings.csv')
    assert main(['--out', str(out), 'gnet', '--coefficients', ratings]) == 0
    table = pd.read_csv(out / 'gnet.csv')
    assert table['label'].iloc[0] == 'HENRIK.LUNDQVIST'
    assert table['stopped'].iloc[0] == pytest.approx(127.80, rel=5e-3)


def test_fit_without_data(tmp_path):
    out = tmp_path / 'run'
    assert main(['--out', str(out), 'fit']) == 1
    error = json.loads((out / 'error.json').read_text())
    assert error['error'] == 'ConfigError'
    assert error['exit_code'] == 1


def test_bad_events_file(tmp_path, fixtures_dir):
    events = tmp_path / 'events.csv'
    lines = open(os.path.join(fixtures_dir, 'events.csv')).read().splitlines()
    lines[2] = lines[2].replace(',12.0,', ',-12.0,')
    events.write_text('\n'.join(lines) + '\n')
    config = write_config(tmp_path, '[data]\nevents = "%s"\nroster = "%s"\n'
                          % (events, os.path.join(fixtures_dir,
                                                  'roster.csv')))
    out = tmp_path / 'run'
    assert main(['--config', config, '--out', str(out), 'summarize']) == 2
    error = json.loads((out / 'error.json').read_text())
    assert error['line'] == 3
    assert error['field'] == 'duration_s'


def test_missing_config(tmp_path):
    assert main(['--config', str(tmp_path / 'absent.toml'), 'summarize',
                 '--counts', '1', '1', '1']) == 1


def test_unknown_option(tmp_path):
    assert main(['--out', str(tmp_path), 'fit', '--mode', 'bayes']) == 1


def test_simulate_then_fit_is_reproducible(tmp_path):
    data = tmp_path / 'league'
    config = write_config(tmp_path, (
        'seed = 7\n'
        '[data]\nevents = "{0}/events.csv"\nroster = "{0}/roster.csv"\n'
        '[fit]\nmax_iterations = 200\n'
        '[league]\nsmall = true\n'
        '[output]\nfigures = false\n').format(data.as_posix()))
    assert main(['--config', config, '--out', str(data), 'simulate']) == 0
    assert (data / 'truth.csv').exists()
    outputs = []
    for name, threads in (('a', '1'), ('b', '3')):
        out = tmp_path / name
        assert main(['--config', config, '--out', str(out), '--threads',
                     threads, 'fit', '--mode', 'mle']) == 0
        outputs.append((out / 'coefficients.csv').read_bytes())
        report = json.loads((out / 'report.json').read_text())
        assert report['variant'] == 'players'
    assert outputs[0] == outputs[1]


def test_validate_quick(tmp_path):
    config = write_config(tmp_path, (
        '[validate]\ngradient_instances = 2\ndensity_settings = 2\n'
        'law_draws = 20000\nlaw_z = 5.0\n'
        '[output]\nfigures = false\n'))
    out = tmp_path / 'run'
    assert main(['--config', config, '--out', str(out), 'validate',
                 '--quick']) == 0
    results = json.loads((out / 'validation.json').read_text())
    assert [r['name'] for r in results] == ['gradient', 'density',
                                            'simulator_law']
