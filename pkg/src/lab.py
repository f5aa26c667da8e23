#!/usr/bin/env python3
"""
Chaos-RIP Lab: experiment driver

Every experiment is a subcommand reading one YAML config:

    python3 src/lab.py gamma --config configs/gamma.yml --out output/gamma
    python3 src/lab.py rip-exact --seed 7 --threads 4

Outputs are CSV/JSON files plus a manifest.yml holding the config echo and
a content hash of every file. Fixed seed, same bytes, whatever --threads is.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from artifacts import ArtifactWriter
from chaining import (CoverKind, CoverModel, closed_form_gamma, cover_trace, dudley_gamma,
                      iid_gamma_bound, sample_complexity, sparse_vx_family)
from chaos_lab import (HansonWrightExponent, MatrixNormSummary, calibrate_reference_tail, chaos_samples,
                       decoupled_moment_formula, decoupled_samples, decoupling_check, deviation_bound_suite,
                       deviation_moment_bounds, empirical_lp, empirical_tail, mc_slack, named_test_matrix,
                       tail_dominated)
from config import ConfigError, ExperimentConfig
from norms import dual_pair_norm_interval, exact_norms, mixed_norm_interval, spectral_norm
from recovery import phase_transition, recovery_trial
from rip_lab import delta_s_exact, minimal_m_scan, rip_success_prob
from samplers import SamplerKind, population_std
from structured_ops import MatrixFamily, fft_self_test
from workers import map_ordered

logger = logging.getLogger(__name__)

DECOUPLING_P = (2, 4, 8)

SUBCOMMANDS = ['sample', 'norms', 'chaos-tails', 'hw-bound', 'gamma',
               'rip-exact', 'rip-scan', 'recover', 'phase']


def load_matrix(path: Path) -> np.ndarray:
    """Read a matrix from .npy or comma-separated .csv"""
    if path.suffix == '.npy':
        return np.load(path)
    if path.suffix == '.csv':
        return np.loadtxt(path, delimiter=',', ndmin=2)
    raise ConfigError(f"matrix file must be .npy or .csv, got {path.name}")


def default_t_grid(scale: float, points: int = 33) -> np.ndarray:
    return np.linspace(0.0, 8.0 * max(scale, 1e-12), points)


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, subcommand: str):
        self.config = config
        self.subcommand = subcommand
        self.stream = config.root_stream(subcommand)
        # results do not depend on threads or out
        echo = {k: v for k, v in config.to_dict().items() if k not in ('threads', 'out')}
        self.writer = ArtifactWriter(Path(config.out), subcommand, echo)

    @property
    def s_values(self) -> List[int]:
        return list(self.config.s_grid) or [self.config.s]

    def run(self) -> List[Path]:
        handler = getattr(self, 'run_' + self.subcommand.replace('-', '_'))
        handler()
        self.writer.finalize()
        return list(self.writer.written)

    def test_matrix(self) -> np.ndarray:
        cfg = self.config
        if cfg.matrix_file:
            return load_matrix(Path(cfg.matrix_file))
        return named_test_matrix(cfg.matrix, cfg.n, self.stream.child('matrix'))

    def run_sample(self):
        """Sampler diagnostics and moment tables"""
        cfg = self.config
        spec = cfg.sampler_spec()
        values = spec.draw(cfg.N, self.stream.child('draws'))
        print(f"📊 Drew {cfg.N} {spec.kind.value} samples (alpha={spec.shape.alpha:g})")

        rows = []
        for p in cfg.p_values:
            powered = np.abs(values) ** p
            mean = float(np.mean(powered))
            se = float(np.std(powered, ddof=1) / math.sqrt(powered.size))
            target = spec.abs_moment(p)
            rows.append([p, mean, se, target, (mean - target) / se if se > 0 else 0.0])
        self.writer.write_csv('sample_moments.csv', ['p', 'empirical', 'se', 'population', 'z_score'], rows)

        psi = spec.psi_alpha_norm(values)
        summary = {
            'kind': spec.kind.value,
            'alpha': spec.shape.alpha,
            'standardized': spec.standardized,
            'N': cfg.N,
            'mean': float(np.mean(values)),
            'mean_se': float(np.std(values, ddof=1) / math.sqrt(values.size)),
            'psi_alpha_estimate': psi,
        }
        if spec.kind is SamplerKind.WEIBULL_SYMMETRIC:
            population = 2.0 ** (1.0 / spec.shape.alpha)
            if spec.standardized:
                population /= population_std(spec.kind, spec.shape)
            summary['psi_alpha_population'] = population
        self.writer.write_json('sample_summary.json', summary)

    def run_norms(self):
        """Norm report for a matrix file or named test matrix"""
        cfg = self.config
        A = self.test_matrix()
        alpha = cfg.alpha_shape()
        exact = exact_norms(A)
        mixed = mixed_norm_interval(A, alpha.alpha_star, cfg.restarts, stream=self.stream.child('mixed'),
                                    threads=cfg.threads)
        dual = dual_pair_norm_interval(A, alpha, cfg.restarts, stream=self.stream.child('dual'),
                                       threads=cfg.threads)
        spectral = spectral_norm(A)
        print(f"🔧 Norms of a {A.shape[0]}x{A.shape[1]} matrix (alpha={alpha.alpha:g})")

        rows = [
            ['frobenius', exact.frobenius, exact.frobenius, 'exact'],
            ['max_entry', exact.max_entry, exact.max_entry, 'exact'],
            ['l2_to_inf', exact.l2_to_inf, exact.l2_to_inf, 'exact'],
            ['lastar_l2', exact.lp_l2(alpha.alpha_star), exact.lp_l2(alpha.alpha_star), 'exact'],
            ['spectral', spectral, spectral, 'exact'],
            ['l2_to_lastar', mixed.lo, mixed.hi, mixed.method.value],
            ['la_to_lastar', dual.lo, dual.hi, dual.method.value],
        ]
        self.writer.write_csv('norms.csv', ['norm', 'lo', 'hi', 'method'], rows)
        self.writer.write_json('norms.json', {
            'shape': list(A.shape),
            'alpha': alpha.alpha,
            'alpha_star': alpha.alpha_star,
            'exact': exact.to_dict((2.0, alpha.alpha_star)),
            'spectral': spectral,
            'l2_to_lastar': mixed.to_dict(),
            'la_to_lastar': dual.to_dict(),
        })

    def run_chaos_tails(self):
        """Empirical chaos tails against the phi_2 bound, the moment bracket and decoupling"""
        cfg = self.config
        A = self.test_matrix()
        alpha = cfg.alpha_shape()
        spec = cfg.sampler_spec()
        norms = MatrixNormSummary.of(A, alpha, cfg.restarts, self.stream.child('norms'), cfg.threads)

        samples = chaos_samples(A, spec, cfg.N, self.stream.child('chaos'), cfg.matrix, cfg.threads)
        print(f"⚡ Drew {samples.count} chaos samples of {cfg.matrix}")
        t_grid = np.asarray(cfg.t_grid, dtype=float) if cfg.t_grid else \
            np.linspace(0.0, float(np.max(np.abs(samples.values))), 41)
        curve = empirical_tail(samples, t_grid, label='chaos_tail')
        phi = HansonWrightExponent(A, alpha, norms).curve(curve.t)

        const = cfg.constants
        C1, C2 = const.tail_C1, const.tail_C2
        if cfg.calibrate_tails:
            C1, C2 = calibrate_reference_tail(cfg.N, self.stream.child('calibration'), const.tail_C1,
                                              restarts=cfg.restarts, threads=cfg.threads)
            print(f"🔧 Calibrated tail constants on I_16, alpha=2: C1={C1:.4g}, C2={C2:.4g}")
        bound = C1 * np.exp(-phi / C2)
        rows = [[t, e, b, ph] for t, e, b, ph in zip(curve.t, curve.empirical, bound, phi)]
        self.writer.write_csv('chaos_tails.csv', ['t', 'empirical', 'bound', 'phi2'], rows)
        self.writer.write_json('tail_constants.json', {
            'tail_C1': C1,
            'tail_C2': C2,
            'calibrated': cfg.calibrate_tails,
            'dominated': tail_dominated(curve, phi, C1, C2, mc_slack(curve.empirical, samples.count)),
        })

        decoupled = decoupled_samples(A, spec, cfg.N, self.stream.child('decoupled'), cfg.matrix, cfg.threads)
        moment_rows = []
        for p in cfg.p_values:
            if p < 2:
                continue
            formula = decoupled_moment_formula(A, alpha, p, norms)
            lp = empirical_lp(decoupled, p)
            moment_rows.append([p, lp, formula.five_term, formula.two_term,
                                lp / formula.five_term if formula.five_term > 0 else 0.0])
        self.writer.write_csv('chaos_moments.csv',
                              ['p', 'empirical_lp', 'five_term', 'two_term', 'ratio'], moment_rows)

        decoupling_rows = []
        for p in cfg.p_values:
            if p not in DECOUPLING_P:
                continue
            check = decoupling_check(A, spec, spec, p, cfg.N, self.stream.child('decoupling', p),
                                     const.decoupling_C, threads=cfg.threads)
            decoupling_rows.append([check.p, check.C, check.lhs, check.rhs, check.ratio,
                                    check.ci_lo, check.ci_hi])
        self.writer.write_csv('decoupling.csv', ['p', 'C', 'lhs', 'rhs', 'ratio', 'ci_lo', 'ci_hi'],
                              decoupling_rows)

    def _family(self) -> MatrixFamily:
        cfg = self.config
        if cfg.family_kind == 'matrix':
            return MatrixFamily([self.test_matrix()], [cfg.matrix])
        return sparse_vx_family(cfg.family_kind, cfg.s, cfg.n, cfg.m, cfg.family_size,
                                self.stream.child('family'))

    def run_hw_bound(self):
        """BoundReport and the two deviation tail right-hand sides"""
        cfg = self.config
        family = self._family()
        alpha = cfg.alpha_shape()
        const = cfg.constants
        print(f"📊 Evaluating bounds over a family of {len(family)} matrices ({cfg.gamma_source} gamma)")

        t_grid = cfg.t_grid or None
        if t_grid is None:
            scale = max(spectral_norm(a) for a in family) ** 2
            t_grid = default_t_grid(scale)
        spec = cfg.sampler_spec()
        L = spec.psi_alpha_norm(stream=self.stream.child('psi_alpha'))
        suite = deviation_bound_suite(
            family, alpha, cfg.gamma_source, spec, cfg.N, self.stream.child('suite'), t_grid,
            C_alpha=const.C_alpha, C1_alpha=const.C1_alpha, c_cov=const.c_cov,
            closed_form_C=const.closed_form_C, L=L, restarts=cfg.restarts, threads=cfg.threads)

        self.writer.write_json('bound_report.json', suite.report.to_dict())
        for curve in (suite.sup_chaos, suite.norm_deviation):
            self.writer.write_csv(f"{curve.label}.csv", curve.columns(), curve.rows())
        moment_rows = []
        for p in cfg.p_values:
            bounds = deviation_moment_bounds(suite.report, p)
            moment_rows.append([p, bounds.sup_chaos, bounds.quadratic_deviation,
                                bounds.quadratic_deviation_improved])
        self.writer.write_csv('deviation_moments.csv',
                              ['p', 'sup_chaos', 'quadratic_deviation', 'quadratic_deviation_improved'],
                              moment_rows)

    def _cover_model(self, s: int) -> CoverModel:
        cfg = self.config
        kind = {'circulant': CoverKind.CIRCULANT_FAMILY, 'gabor': CoverKind.GABOR_FAMILY}.get(
            cfg.ensemble, CoverKind.SPARSE_BALL)
        n = cfg.m * cfg.m if cfg.ensemble == 'gabor' else cfg.n
        return CoverModel(kind, s=s, n=n, m=cfg.m, c_cov=cfg.constants.c_cov)

    def run_gamma(self):
        """Dudley integrals, closed forms and sample-complexity tables"""
        cfg = self.config
        alpha = cfg.sampler.alpha
        const = cfg.constants
        delta = min(max(cfg.delta, 1e-6), 0.999)
        print(f"🎨 Chaining functionals for {cfg.ensemble} (alpha={alpha:g}, n={cfg.n}, m={cfg.m})")

        rows = []
        traces = []
        for s in self.s_values:
            model = self._cover_model(s)
            u_max = model.diameter
            dudley = dudley_gamma(alpha, model, u_max)
            closed = closed_form_gamma(alpha, s, model.n, cfg.m, const.closed_form_C)
            sc = sample_complexity(alpha, s, model.n, delta, const.c1)
            rows.append([s, model.n, cfg.m, u_max, dudley, closed, iid_gamma_bound(alpha, s, model.n, cfg.m),
                         sc.f1, sc.f2, sc.m_required])
            traces += [[s] + row for row in cover_trace(model, alpha, u_max)]
        self.writer.write_csv('gamma_summary.csv',
                              ['s', 'n', 'm', 'u_max', 'dudley_gamma', 'closed_form_gamma', 'iid_gamma',
                               'f1', 'f2', 'm_required'], rows)
        self.writer.write_csv('gamma_trace.csv', ['s', 'u', 'log_cover', 'integrand'], traces)

    def run_rip_exact(self):
        """Exact delta_s of one drawn operator"""
        cfg = self.config
        op = cfg.ensemble_spec().draw(self.stream.child('operator'))
        print(f"🔧 Exact restricted isometry constants of a {op.shape[0]}x{op.shape[1]} {cfg.ensemble} operator")
        results = [delta_s_exact(op, s, cfg.budget, cfg.threads) for s in self.s_values]
        rows = [[r.s, op.shape[0], r.delta_estimate, r.method.value, r.supports_examined] for r in results]
        self.writer.write_csv('rip_exact.csv', ['s', 'm', 'delta', 'method', 'supports'], rows)
        self.writer.write_json('rip_exact.json', [r.to_dict() for r in results])

    def run_rip_scan(self):
        """Success probabilities at the configured m and the minimal-m scan"""
        cfg = self.config
        ensemble = cfg.ensemble_spec()
        rows = []
        for s in self.s_values:
            est = rip_success_prob(ensemble, s, cfg.delta, cfg.draws, self.stream.child('success', s),
                                   cfg.budget, cfg.mc_trials, cfg.threads)
            rows.append([s, cfg.m, cfg.delta, est.fraction, est.ci_lo, est.ci_hi, est.method.value])
        self.writer.write_csv('rip_success.csv', ['s', 'm', 'delta', 'success', 'ci_lo', 'ci_hi', 'method'], rows)

        print(f"⚡ Scanning minimal m for s in {self.s_values}")
        scan = minimal_m_scan(ensemble, self.s_values, cfg.delta, cfg.target_prob, cfg.draws,
                              self.stream.child('scan'), cfg.budget, cfg.mc_trials, cfg.constants.c1, cfg.threads)
        self.writer.write_csv('rip_scan.csv', ['s', 'm_star', 'f1', 'ratio', 'evaluations'],
                              [[r.s, r.m_star, r.f1, r.ratio, r.evaluations] for r in scan.rows])
        self.writer.write_json('rip_scan.json', {
            'rows': [r.to_dict() for r in scan.rows],
            'slope': scan.slope,
            'ratio_spread': scan.ratio_spread(),
            'delta': scan.delta,
            'target_prob': scan.target_prob,
            'method': scan.method.value,
            'diagnostics': scan.diagnostics,
        })

    def run_recover(self):
        """Repeated basis-pursuit recovery at one (m, s)"""
        cfg = self.config
        ensemble = cfg.ensemble_spec()
        stream = self.stream.child('trials')
        outcomes = map_ordered(
            lambda t: recovery_trial(ensemble, cfg.s, stream.child('trial', t), cfg.signal, cfg.max_iter),
            range(cfg.trials), cfg.threads)
        wins = sum(1 for o in outcomes if o.success)
        print(f"✨ Recovered {wins}/{cfg.trials} signals (m={cfg.m}, s={cfg.s})")
        rows = [[t, o.success, o.error, o.converged, o.iterations] for t, o in enumerate(outcomes)]
        self.writer.write_csv('recover.csv', ['trial', 'success', 'error', 'converged', 'iterations'], rows)
        self.writer.write_json('recover_summary.json', {
            'm': cfg.m, 'n': ensemble.n, 's': cfg.s, 'trials': cfg.trials,
            'successes': wins, 'nonconverged': sum(1 for o in outcomes if not o.converged),
        })

    def run_phase(self):
        """Success-rate matrix over (m, s)"""
        cfg = self.config
        m_grid = list(cfg.m_grid) or [cfg.m]
        print(f"🎨 Phase transition over {len(m_grid)}x{len(self.s_values)} cells, {cfg.trials} trials each")
        table = phase_transition(cfg.ensemble_spec(), m_grid, self.s_values, cfg.trials,
                                 self.stream.child('phase'), cfg.signal, cfg.max_iter, cfg.threads)
        self.writer.write_csv('phase.csv', ['m', 's', 'success', 'ci_lo', 'ci_hi', 'nonconverged'], table.rows())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Structured random matrices: chaos, chaining and R.I.P. experiments')
    parser.add_argument('subcommand', type=str, help=f"one of: {', '.join(SUBCOMMANDS)}")
    parser.add_argument('--config', type=str, default=None, help='YAML experiment config')
    parser.add_argument('--seed', type=int, default=None, help='Master seed (overrides config)')
    parser.add_argument('--threads', type=int, default=None, help='Worker threads (overrides config)')
    parser.add_argument('--out', type=str, default=None, help='Output directory (overrides config and RIPLAB_OUT)')
    parser.add_argument('--verbose', action='store_true', help='Log progress details')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')

    if args.subcommand not in SUBCOMMANDS:
        print(f"❌ Unknown subcommand '{args.subcommand}' (expected one of: {', '.join(SUBCOMMANDS)})")
        return 2

    try:
        config = ExperimentConfig.load(Path(args.config)) if args.config else ExperimentConfig()
        config = config.with_overrides(args.seed, args.threads, args.out)
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        return 2

    runner = ExperimentRunner(config, args.subcommand)
    print(f"🎨 Chaos-RIP Lab: {args.subcommand} (seed {config.master_seed}, {config.threads} thread(s))")
    try:
        fft_self_test()
        written = runner.run()
    except ConfigError as e:
        runner.writer.discard()
        print(f"❌ Invalid config: {e}")
        return 2
    except Exception as e:
        runner.writer.discard()
        print(f"❌ {args.subcommand} failed: {e}")
        logger.debug("failure details", exc_info=True)
        return 1

    for path in written:
        print(f"💾 Saved {path}")
    print("\n✨ Done!")
    return 0


if __name__ == "__main__":
    sys.exit(main())
