import os.path
import json
import shutil
import tempfile
from unittest import TestCase
import numpy as np
from kldescent.traces import IterateTrace, write_trace_csv
from kldescent.run_ import cmd as run_cmd
from kldescent.monitor_ import cmd as monitor_cmd
from kldescent.rates_ import cmd as rates_cmd
from kldescent.decompose_ import cmd as decompose_cmd
from kldescent.lm_ import cmd as lm_cmd
from kldescent.main_ import cmd as main_cmd

nan = float('nan')

QUADRATIC_LM = {
    'seed': 0, 'solver': 'lm',
    'problem': {'type': 'quadratic', 'Q': [[2.0, 0.0], [0.0, 8.0]],
                'b': [2.0, 8.0], 'x0': [0.0, 0.0],
                'C': {'B': [[1.0, 1.0]], 'c': [1.0]}},
    'lm': {'lambdas': 0.9},
    'output': {'name': 'quadratic'}}


class KldCommandTest(TestCase):

    def setUp(self):
        self.work_dir = tempfile.mkdtemp()
        self.out_dir = os.path.join(self.work_dir, 'out')

    def tearDown(self):
        shutil.rmtree(self.work_dir)

    def write_config(self, doc, name='experiment.json'):
        path = os.path.join(self.work_dir, name)
        with open(path, 'w') as f:
            json.dump(doc, f)
        return path

    def load(self, name):
        with open(os.path.join(self.out_dir, name)) as f:
            return json.load(f)

    def run_abs(self):
        path = self.write_config({
            'seed': 0, 'solver': 'proximal_point',
            'problem': {'type': 'abs', 'x0': [1.0]},
            'schedules': {'steps': 0.3}, 'output': {'name': 'abs'}})
        self.assertEqual(run_cmd(['--config', path, '--out', self.out_dir]),
                         0)
        return os.path.join(self.out_dir, 'abs.csv')

    def test_run(self):
        trace_path = self.run_abs()
        self.assertTrue(os.path.exists(trace_path))
        summary = self.load('abs.summary.json')
        self.assertEqual(summary['status'], 'converged')
        self.assertEqual(summary['final_value'], 0.0)

    def test_run_reproducible(self):
        path = self.write_config({
            'seed': 3, 'solver': 'afbe',
            'problem': {'type': 'decomposition', 'm': 6, 'n': 5, 'r': 1,
                        's': 4, 'init_radius': 1e-3},
            'schedules': {'steps': 0.5, 'sigma': 0.1, 'rho': 0.9,
                          'mu0': 1e-3, 'mu_ratio': 0.5},
            'stop': {'max_iter': 40}, 'output': {'name': 'small'}})
        contents = []
        for sub in ('first', 'second'):
            out_dir = os.path.join(self.work_dir, sub)
            self.assertEqual(run_cmd(['--config', path, '--out', out_dir]),
                             0)
            with open(os.path.join(out_dir, 'small.csv'), 'rb') as f:
                contents.append(f.read())
        self.assertEqual(contents[0], contents[1])
        with open(os.path.join(self.work_dir, 'second',
                               'small.summary.json')) as f:
            summary = json.load(f)
        self.assertIn('error_slack_steps', summary)

    def test_run_refused_schedule(self):
        path = self.write_config({
            'seed': 0, 'solver': 'afb',
            'problem': {'type': 'double_well', 'x0': [0.5]},
            'schedules': {'steps': 0.1}})
        self.assertEqual(run_cmd(['--config', path, '--out', self.out_dir]),
                         3)

    def test_run_bad_config(self):
        path = self.write_config({'seed': 0, 'solver': 'afb'})
        self.assertEqual(run_cmd(['--config', path]), 2)

    def test_monitor(self):
        path = self.write_config({
            'seed': 0, 'solver': 'afb',
            'problem': {'type': 'double_well', 'x0': [0.5]},
            'schedules': {'steps': 0.05}, 'output': {'name': 'well'}})
        self.assertEqual(run_cmd(['--config', path, '--out', self.out_dir]),
                         0)
        trace_path = os.path.join(self.out_dir, 'well.csv')
        self.assertEqual(monitor_cmd(['--trace', trace_path]), 0)
        report = self.load('well.monitor.json')
        self.assertTrue(report['passed'])

    def test_monitor_violation(self):
        n = 20
        x = 0.7 ** np.arange(n + 1)
        f = 0.5 * x ** 2
        f[6] = f[5] + 0.1
        trace = IterateTrace.from_columns(
            f, step_norm=np.concatenate([[nan], np.abs(np.diff(x))]),
            slope_norm=x, a_k=np.concatenate([[nan], np.full(n, 1.0 / 0.3)]),
            b_k=np.concatenate([[nan], np.full(n, 0.3)]),
            eps_k=np.concatenate([[nan], np.zeros(n)]))
        trace_path = os.path.join(self.work_dir, 'bad.csv')
        write_trace_csv(trace, trace_path)
        self.assertEqual(monitor_cmd(['--trace', trace_path]), 1)

    def test_monitor_schema(self):
        trace_path = os.path.join(self.work_dir, 'broken.csv')
        with open(trace_path, 'w') as f:
            f.write('iteration,value\n0,1.0\n')
        self.assertEqual(monitor_cmd(['--trace', trace_path]), 2)
        self.assertEqual(monitor_cmd(['--trace', os.path.join(
            self.work_dir, 'missing.csv')]), 2)

    def test_rates_finite_termination(self):
        trace_path = self.run_abs()
        self.assertEqual(rates_cmd(['--trace', trace_path, '--theta', '1',
                                    '--C', '1', '--f-star', '0']), 0)
        report = self.load('abs.rates.json')
        self.assertEqual(report['prediction']['regime'],
                         'finite_termination')
        self.assertTrue(report['agreement']['agrees'])

    def test_rates_insufficient_data(self):
        trace_path = os.path.join(self.work_dir, 'short.csv')
        write_trace_csv(IterateTrace.from_columns([1.0, 0.5, 0.25]),
                        trace_path)
        self.assertEqual(rates_cmd(['--trace', trace_path, '--theta',
                                    '0.5']), 5)
        self.assertEqual(rates_cmd(['--trace', trace_path]), 2)

    def test_decompose(self):
        self.assertEqual(decompose_cmd([
            '--generate', '10', '10', '1', '5', '--radius', '1e-4',
            '--out', self.out_dir]), 0)
        for name in ('decomposition_X.txt', 'decomposition_Y.txt',
                     'decomposition.csv'):
            self.assertTrue(os.path.exists(os.path.join(self.out_dir, name)))
        doc = self.load('decomposition.recovery.json')
        self.assertEqual(doc['recovery']['status'], 'recovered')
        Y = np.loadtxt(os.path.join(self.out_dir, 'decomposition_Y.txt'),
                       delimiter=',')
        self.assertLessEqual(np.count_nonzero(Y), 5)

    def test_lm_refused(self):
        path = self.write_config(QUADRATIC_LM)
        self.assertEqual(lm_cmd(['--config', path, '--out', self.out_dir]),
                         3)
        self.assertEqual(lm_cmd(['--config', path, '--check-only', '--out',
                                 self.out_dir]), 3)
        report = self.load('quadratic.lm.json')
        self.assertIn('schedule', report)

    def test_lm_pure_newton(self):
        path = self.write_config(QUADRATIC_LM)
        self.assertEqual(lm_cmd(['--config', path, '--pure-newton', '--out',
                                 self.out_dir]), 0)
        summary = self.load('quadratic.lm.json')
        np.testing.assert_allclose(summary['final_point'], [0.2, 0.8],
                                   atol=1e-10)
        self.assertTrue(summary['meta']['lm']['projected_start'])

    def test_dispatch(self):
        self.assertEqual(main_cmd([]), 0)
        self.assertEqual(main_cmd(['--help']), 0)
        self.assertEqual(main_cmd(['optimize']), 2)
        path = self.write_config(QUADRATIC_LM)
        self.assertEqual(main_cmd(['lm', '--config', path, '--pure-newton',
                                   '--out', self.out_dir]), 0)
