"""Experiment command line: parse flat key=value configs, emit CSV + reports.

Usage:
    holder <command> [--config PATH] [--set key=value]... --out DIR
           [--seed N] [--jobs N]

Commands: score, divergence, fit, regress, invariance, influence, redescend,
sweep.  Every run writes ``results.csv`` (always with a header row) and
``report.txt`` whose first line is a machine-readable verdict
(PASS | FAIL | INCONCLUSIVE); sweeps additionally write ``plotdata_*.csv``
curve files with ``#``-prefixed column documentation.

Exit status: 0 success, 2 validation failure, 3 numerical failure,
64 unknown command.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .affine import AffineMap, transform_density
from .errors import (ConfigError, DegenerateInputError, DomainError,
                     HolderError, SingularHessianError, StructuralError,
                     UnsupportedFamilyError)
from .grids import GridDensity, default_tol, integrate, read_grid
from .estimators import FitConfig, fit, fit_regression, make_conditional, population_fit
from .models import (Sample, draw_contaminated_sample, draw_sample,
                     make_parametric, read_samples, render_density)
from .robustness import influence_function, redescend_check, _FrozenQuadrature, objective_hessian
from .scores import GammaScore, KL, divergence, score_from_config, _PHI_BUILTINS
from .rng import rng_for

COMMANDS = ("score", "divergence", "fit", "regress", "invariance",
            "influence", "redescend", "sweep")

_USAGE = __doc__


def _fmt(x):
    return repr(float(x))


# -- config handling -------------------------------------------------------------

def load_config(path=None, overrides=()):
    cfg = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                # one pair per line, or several separated by semicolons
                # (e.g. "family=holder; gamma=0.5; phi=kappa")
                for item in line.split(";"):
                    item = item.strip()
                    if not item:
                        continue
                    if "=" not in item:
                        raise ConfigError(f"config lines must be key=value, got {item!r}")
                    key, _, val = item.partition("=")
                    cfg[key.strip()] = val.strip()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def _get_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {cfg[key]!r}") from None


def _get_int(cfg, key, default=None):
    return int(_get_float(cfg, key, default))


def _get_floats(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return np.asarray(default, dtype=float)
    try:
        return np.array([float(v) for v in cfg[key].split(",") if v.strip() != ""])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a csv of numbers") from None


def _get_bool(cfg, key, default=False):
    if key not in cfg:
        return default
    val = cfg[key].strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r} must be boolean-like, got {val!r}")


def _model_from_config(cfg, prefix="model"):
    kind = cfg.get(prefix, "gaussian-mean-scale")
    hyper = {}
    if f"{prefix}.scale" in cfg:
        hyper["scale"] = _get_float(cfg, f"{prefix}.scale")
    if f"{prefix}.dim" in cfg:
        hyper["dim"] = _get_int(cfg, f"{prefix}.dim")
    if f"{prefix}.weights" in cfg:
        hyper["weights"] = tuple(_get_floats(cfg, f"{prefix}.weights"))
    return make_parametric(kind, **hyper)


def _density_from_config(cfg, prefix, lo=None, hi=None, n=None):
    if f"{prefix}.file" in cfg:
        return read_grid(cfg[f"{prefix}.file"])
    model = _model_from_config(cfg, prefix=f"{prefix}.model") \
        if f"{prefix}.model" in cfg else make_parametric("gaussian-mean-scale")
    theta = _get_floats(cfg, f"{prefix}.theta")
    return render_density(model, theta, lo=lo, hi=hi, points_per_axis=n)


def _density_pair(cfg, seed):
    """p and q on one shared grid (union box of their model supports)."""
    if "p.file" in cfg or "q.file" in cfg:
        p = _density_from_config(cfg, "p")
        q = _density_from_config(cfg, "q")
        return p, q
    mp = _model_from_config(cfg, "p.model") if "p.model" in cfg \
        else make_parametric("gaussian-mean-scale")
    mq = _model_from_config(cfg, "q.model") if "q.model" in cfg \
        else make_parametric("gaussian-mean-scale")
    tp = _get_floats(cfg, "p.theta")
    tq = _get_floats(cfg, "q.theta")
    lo_p, hi_p = mp.support(tp)
    lo_q, hi_q = mq.support(tq)
    lo, hi = np.minimum(lo_p, lo_q), np.maximum(hi_p, hi_q)
    n = _get_int(cfg, "grid.n", max(mp.quad_points, mq.quad_points))
    p = render_density(mp, tp, lo=lo, hi=hi, points_per_axis=n)
    q = render_density(mq, tq, lo=lo, hi=hi, points_per_axis=n)
    _check_mass(p, "p")
    _check_mass(q, "q")
    return p, q


def _check_mass(g, label):
    tol = default_tol(g.dim)
    mass = integrate(g)
    if abs(mass - 1.0) > 1e3 * tol:
        raise DegenerateInputError(
            f"{label} integrates to {mass!r}, outside 1 +- {1e3 * tol:g}")


def _fit_config(cfg, model_dim_k, seed, default_init):
    init = _get_floats(cfg, "init", default_init)
    if init.size != model_dim_k:
        raise ConfigError(f"init expects {model_dim_k} values")
    return FitConfig(init_theta=init,
                     max_iters=_get_int(cfg, "max_iters", 2000),
                     grad_tol=_get_float(cfg, "grad_tol", 1e-4),
                     step_tol=_get_float(cfg, "step_tol", 1e-8),
                     optimizer=cfg.get("optimizer", "nelder-mead"),
                     seed=seed,
                     polish=_get_bool(cfg, "polish", True))


# -- output helpers -----------------------------------------------------------------

def _write_results(outdir, header, rows):
    path = os.path.join(outdir, "results.csv")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def _write_report(outdir, verdict, lines=()):
    path = os.path.join(outdir, "report.txt")
    with open(path, "w") as fh:
        fh.write(verdict + "\n")
        for line in lines:
            fh.write(line + "\n")
    return path


def emit_plotdata(outdir, name, columns, rows, comments=()):
    """One curve file per sweep quantity; '#' lines document the columns."""
    if len(rows) < 1:
        raise DegenerateInputError("sweep produced no rows; nothing to plot")
    path = os.path.join(outdir, f"plotdata_{name}.csv")
    with open(path, "w") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        fh.write(f"# columns: {','.join(columns)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# -- commands --------------------------------------------------------------------------

def _cmd_score(cfg, outdir, seed, jobs):
    score = score_from_config(cfg)
    p, q = _density_pair(cfg, seed)
    value = divergence(score, p.normalize(), q.normalize())
    header = ["family", "gamma", "s_fg", "s_ff", "divergence"]
    row = [score.name, _fmt(score.gamma), _fmt(value.s_fg), _fmt(value.s_ff),
           _fmt(value.divergence)]
    _write_results(outdir, header, [row])
    _write_report(outdir, "PASS", [f"score {score.name} computed",
                                   f"divergence={value.divergence!r}"])
    return 0


def _cmd_divergence(cfg, outdir, seed, jobs):
    return _cmd_score(cfg, outdir, seed, jobs)


def _cmd_fit(cfg, outdir, seed, jobs):
    score = score_from_config(cfg)
    model = _model_from_config(cfg)
    if "data" in cfg:
        sample = read_samples(cfg["data"])
        default_init = None
    else:
        theta_true = _get_floats(cfg, "theta_true")
        n = _get_int(cfg, "n", 1000)
        eps = _get_float(cfg, "eps", 0.0)
        if eps > 0:
            sample = draw_contaminated_sample(model, theta_true, eps,
                                              _get_floats(cfg, "z"), n, seed)
        else:
            sample = draw_sample(model, theta_true, n, seed)
        default_init = theta_true
    fit_cfg = _fit_config(cfg, model.param_dim, seed, default_init)
    result = fit(score, model, sample, fit_cfg)
    header = [f"theta_{name}" for name in model.theta_names] \
        + ["objective", "iterations", "converged"]
    _write_results(outdir, header, [result.csv_row().split(",")])
    verdict = "PASS" if result.converged else "FAIL"
    _write_report(outdir, verdict,
                  [f"theta_hat={list(map(float, result.theta_hat))!r}",
                   f"objective={result.objective_value!r}",
                   f"iterations={result.iterations}"])
    return 0 if result.converged else 3


def _cmd_regress(cfg, outdir, seed, jobs):
    gamma = _get_float(cfg, "gamma")
    kappa = _get_float(cfg, "kappa")
    noise = cfg.get("noise", "fit")
    noise_val = None if noise == "fit" else float(noise)
    x_dim = _get_int(cfg, "x_dim", 1)
    cmodel = make_conditional("linear-gaussian", x_dim=x_dim, noise=noise_val,
                              y_lo=_get_float(cfg, "y.lo", -30.0),
                              y_hi=_get_float(cfg, "y.hi", 30.0))
    if "data" in cfg:
        sample = read_samples(cfg["data"])
        if sample.covariates is None:
            raise ConfigError("regression data must carry x columns")
        default_init = None
    else:
        a = _get_floats(cfg, "a")
        b = _get_float(cfg, "b")
        s = _get_float(cfg, "s", 1.0)
        n = _get_int(cfg, "n", 500)
        rng = rng_for(seed, 1)
        x = rng.uniform(_get_float(cfg, "x.lo", -3.0), _get_float(cfg, "x.hi", 3.0),
                        size=(n, x_dim))
        y = x @ a + b + s * rng.standard_normal(n)
        out_eps = _get_float(cfg, "outlier.eps", 0.0)
        if out_eps > 0:
            y = np.where(rng.random(n) < out_eps, _get_float(cfg, "outlier.y"), y)
        sample = Sample(points=y, covariates=x)
        default_init = np.concatenate([a, [b]] + ([] if noise_val else [[s]]))
    fit_cfg = _fit_config(cfg, cmodel.param_dim, seed, default_init)
    result = fit_regression(gamma, kappa, cmodel, sample, fit_cfg)
    header = [f"theta_{name}" for name in cmodel.theta_names] \
        + ["objective", "iterations", "converged"]
    _write_results(outdir, header, [result.csv_row().split(",")])
    verdict = "PASS" if result.converged else "FAIL"
    _write_report(outdir, verdict, [f"theta_hat={list(map(float, result.theta_hat))!r}"])
    return 0 if result.converged else 3


def _random_gaussian_pair(dim, n, rng):
    def gauss(mean, scales):
        def values(pts):
            u = (pts - mean) / scales
            return np.exp(-0.5 * np.sum(u * u, axis=1)) \
                / np.prod(scales * np.sqrt(2 * np.pi))
        return values
    mean_p = rng.uniform(-1.5, 1.5, size=dim)
    mean_q = rng.uniform(-1.5, 1.5, size=dim)
    sc_p = rng.uniform(0.7, 1.6, size=dim)
    sc_q = rng.uniform(0.7, 1.6, size=dim)
    lo, hi = np.full(dim, -14.0), np.full(dim, 14.0)
    p = GridDensity.from_callable(gauss(mean_p, sc_p), lo, hi, n)
    q = GridDensity.from_callable(gauss(mean_q, sc_q), lo, hi, n)
    return p.normalize(), q.normalize()


def _cmd_invariance(cfg, outdir, seed, jobs):
    score = score_from_config(cfg)
    if score.affine_scale_exponent is None:
        raise UnsupportedFamilyError(
            f"{score.name} has no exact scale law; use the holder or kl family")
    amap = AffineMap.from_config(
        f"sigma={cfg.get('sigma', '1')}; mu={cfg.get('mu', '0')}")
    pairs = _get_int(cfg, "pairs", 5)
    n = _get_int(cfg, "grid.n", 1201 if amap.dim == 1 else 241)
    tol = _get_float(cfg, "tol", 1e-5)
    h = abs(amap.det_sigma) ** (-score.affine_scale_exponent)
    rows = []
    worst = 0.0
    for i in range(pairs):
        rng = rng_for(seed, 7, i)
        p, q = _random_gaussian_pair(amap.dim, n, rng)
        d_raw = divergence(score, p, q).divergence
        d_mapped = divergence(score, transform_density(p, amap),
                              transform_density(q, amap)).divergence
        residual = abs(h * d_mapped - d_raw) / max(abs(d_raw), 1e-12)
        worst = max(worst, residual)
        rows.append([str(i), _fmt(amap.det_sigma), _fmt(h), _fmt(d_raw),
                     _fmt(d_mapped), _fmt(residual)])
    _write_results(outdir, ["pair", "det", "h", "d_raw", "d_mapped", "residual"], rows)
    verdict = "PASS" if worst < tol else "FAIL"
    _write_report(outdir, verdict, [f"max residual {worst!r} against tolerance {tol!r}"])
    return 0 if verdict == "PASS" else 3


def _phi_from_config(cfg, gamma):
    name = cfg.get("phi", "kappa")
    if name not in _PHI_BUILTINS:
        raise ConfigError(f"unknown phi builtin {name!r}")
    kwargs = {}
    if "kappa" in cfg:
        kwargs["kappa"] = _get_float(cfg, "kappa")
    if "c" in cfg:
        kwargs["c"] = _get_float(cfg, "c")
    return _PHI_BUILTINS[name](gamma, **kwargs)


def _influence_rows(cfg, seed):
    gamma = _get_float(cfg, "gamma")
    model = _model_from_config(cfg)
    theta_star = _get_floats(cfg, "theta_star")
    phi = _phi_from_config(cfg, gamma)
    if "z" in cfg:
        zs = [np.array([float(v) for v in part.split(",")])
              for part in cfg["z"].split(";") if part.strip()]
    else:
        lo, hi = model.support(theta_star)
        center, sd = (lo + hi) / 2.0, (hi - lo) / 16.0
        count = _get_int(cfg, "z.count", 50)
        zmax = _get_float(cfg, "z.max", 12.0)
        direction = np.zeros(model.dim)
        direction[0] = 1.0
        zs = [center + t * sd * direction
              for t in np.linspace(0.5, zmax, count)]
    quad = _FrozenQuadrature(model, theta_star)
    hessian = objective_hessian(phi, gamma, model, theta_star, quad=quad)
    rows = []
    for z in zs:
        res = influence_function(phi, gamma, model, theta_star, z,
                                 hessian=hessian, quad=quad)
        rows.append((z, res.if_vector, res.norm))
    return model, rows


def _cmd_influence(cfg, outdir, seed, jobs):
    model, rows = _influence_rows(cfg, seed)
    k = rows[0][1].size
    header = [f"z{i + 1}" for i in range(model.dim)] \
        + [f"if_{i + 1}" for i in range(k)] + ["if_norm"]
    table = [[_fmt(v) for v in np.concatenate([z, vec, [norm]])]
             for z, vec, norm in rows]
    _write_results(outdir, header, table)
    _write_report(outdir, "PASS", [f"{len(rows)} influence evaluations"])
    return 0


def _cmd_redescend(cfg, outdir, seed, jobs):
    gamma = _get_float(cfg, "gamma")
    model = _model_from_config(cfg)
    theta_star = _get_floats(cfg, "theta_star")
    phi = _phi_from_config(cfg, gamma)
    report = redescend_check(phi, gamma, model, theta_star,
                             n_z=_get_int(cfg, "z.count", 25),
                             max_sd=_get_float(cfg, "z.max", 12.0))
    header = ["condition_met", "phi_d2_at_1", "limit_estimate", "max_tail", "last_tail"]
    row = [str(report.condition_met).lower(), _fmt(report.phi_d2_at_1),
           _fmt(report.limit_estimate), _fmt(report.max_tail),
           _fmt(report.tail_norms[-1][1])]
    _write_results(outdir, header, [row])
    _write_report(outdir, report.verdict, str(report).splitlines()[1:])
    if report.verdict == "FAIL":
        return 3
    return 0


# -- sweeps ------------------------------------------------------------------------------

def _contamination_bias(cfg, seed, eps, family):
    """Population mean-bias of one family under eps-contamination at z."""
    from .models import contaminate

    model = _model_from_config(cfg)
    theta_true = _get_floats(cfg, "theta_true")
    z = _get_floats(cfg, "z", [10.0])
    p_eps = contaminate(model, theta_true, eps, z)
    if family == "kl":
        score = KL()
    else:
        score = GammaScore(_get_float(cfg, "gamma", 0.5))
    fit_cfg = FitConfig(init_theta=theta_true, step_tol=1e-9, grad_tol=1e-2,
                        seed=seed, polish=True)
    res = population_fit(score, model, p_eps, fit_cfg)
    return float(res.theta_hat[0] - theta_true[0])


def _cmd_sweep(cfg, outdir, seed, jobs):
    kind = cfg.get("sweep.kind")
    if kind == "influence-z":
        model, rows = _influence_rows(cfg, seed)
        if len(rows) < 2:
            raise DegenerateInputError("influence sweep needs at least 2 z-values")
        k = rows[0][1].size
        header = [f"z{i + 1}" for i in range(model.dim)] \
            + [f"if_{i + 1}" for i in range(k)] + ["if_norm"]
        table = [[_fmt(v) for v in np.concatenate([z, vec, [norm]])]
                 for z, vec, norm in rows]
        _write_results(outdir, header, table)
        emit_plotdata(outdir, "if_norm", ["z_norm", "if_norm"],
                      [(float(np.linalg.norm(z)), norm) for z, _, norm in rows],
                      comments=["influence norm against contamination distance"])
        _write_report(outdir, "PASS", [f"{len(rows)} sweep rows"])
        return 0

    if kind == "divergence-gamma":
        gammas = _get_floats(cfg, "gammas")
        families = [f.strip() for f in cfg.get("families", "gamma").split(",")]
        if gammas.size < 2:
            raise DegenerateInputError("gamma sweep needs at least 2 values")
        results = []
        for fam in families:
            rows = []
            for g in gammas:
                sub = dict(cfg)
                sub["family"] = fam
                sub["gamma"] = repr(float(g))
                score = score_from_config(sub)
                p, q = _density_pair(cfg, seed)
                val = divergence(score, p.normalize(), q.normalize()).divergence
                rows.append((float(g), val))
                results.append([fam, _fmt(g), _fmt(val)])
            emit_plotdata(outdir, fam, ["gamma", "divergence"], rows,
                          comments=[f"{fam} divergence for the configured pair"])
        _write_results(outdir, ["family", "gamma", "divergence"], results)
        _write_report(outdir, "PASS", [f"{len(results)} sweep rows"])
        return 0

    if kind == "contamination":
        eps_values = _get_floats(cfg, "eps.values")
        if eps_values.size < 2:
            raise DegenerateInputError("contamination sweep needs at least 2 levels")
        families = ("gamma-score", "kl")
        tasks = [(float(eps), fam) for fam in families for eps in eps_values]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                biases = list(pool.map(_contamination_task,
                                       [(dict(cfg), seed, eps, fam) for eps, fam in tasks]))
        else:
            biases = [_contamination_bias(cfg, seed, eps, fam) for eps, fam in tasks]
        results = []
        for fam in families:
            rows = []
            for (eps, f), bias in zip(tasks, biases):
                if f == fam:
                    rows.append((eps, bias))
                    results.append([fam, _fmt(eps), _fmt(bias)])
            emit_plotdata(outdir, fam, ["eps", "mean_bias"], rows,
                          comments=["population mean bias under point contamination"])
        _write_results(outdir, ["family", "eps", "mean_bias"], results)
        _write_report(outdir, "PASS", [f"{len(results)} sweep rows"])
        return 0

    raise ConfigError(f"unknown sweep.kind {kind!r}; choose influence-z, "
                      f"divergence-gamma or contamination")


def _contamination_task(args):
    cfg, seed, eps, fam = args
    return _contamination_bias(cfg, seed, eps, fam)


_RUNNERS = {
    "score": _cmd_score,
    "divergence": _cmd_divergence,
    "fit": _cmd_fit,
    "regress": _cmd_regress,
    "invariance": _cmd_invariance,
    "influence": _cmd_influence,
    "redescend": _cmd_redescend,
    "sweep": _cmd_sweep,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE)
        return 0 if argv else 64
    command = argv[0]
    if command not in COMMANDS:
        print(_USAGE)
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return 64

    parser = argparse.ArgumentParser(prog=f"holder {command}", add_help=True)
    parser.add_argument("--config", default=None)
    parser.add_argument("--set", action="append", default=[], dest="sets",
                        metavar="key=value")
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    try:
        args = parser.parse_args(argv[1:])
    except SystemExit:
        return 2

    try:
        cfg = load_config(args.config, args.sets)
        seed = args.seed if args.seed is not None else _get_int(cfg, "seed", 0)
        os.makedirs(args.out, exist_ok=True)
        return _RUNNERS[command](cfg, args.out, seed, max(1, args.jobs))
    except (ConfigError, StructuralError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateInputError, SingularHessianError, UnsupportedFamilyError,
            HolderError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
