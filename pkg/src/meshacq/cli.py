"""Command line entry point: ``meshacq <command>``."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, build_config, dump_config, load_config, problem_spec

log = logging.getLogger("meshacq")


def _fail(msg: str, code: int = 2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _config(path, preset, seed=None, run_overrides=None):
    """Load and validate; command-line overrides are validated like file values."""
    try:
        cfg = load_config(Path(path) if path else None, preset)
        overrides = dict(run_overrides or {})
        if seed is not None:
            overrides["seeds"] = [seed]
        if overrides:
            data = cfg.model_dump(mode="json")
            data["run"].update(overrides)
            cfg = build_config(data)
    except (ConfigError, OSError) as exc:
        _fail(f"invalid configuration: {exc}")
    return cfg


def _read_corpus(corpus_dir: Path, cfg):
    from .generators import read_corpus

    if not (Path(corpus_dir) / "manifest.json").exists():
        _fail(f"no corpus in {corpus_dir}; create one with `meshacq gen-data --out {corpus_dir}`")
    corpus = read_corpus(corpus_dir)
    if corpus.spec != problem_spec(cfg):
        _fail(f"corpus in {corpus_dir} was generated for a different problem configuration")
    return corpus


config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                          help="YAML experiment configuration.")
preset_opt = click.option("--preset", type=click.Choice(["desk", "paper"]), default=None,
                          help="Start from a named preset; the config file overrides it.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the seed.")
force_opt = click.option("--force", is_flag=True, help="Overwrite existing outputs.")
corpus_opt = click.option("--corpus", "corpus_dir", type=click.Path(file_okay=False), default="data",
                          show_default=True, help="Corpus directory written by gen-data.")


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose):
    """Active selection of solver query points for training PDE surrogates."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-data")
@config_opt
@preset_opt
@click.option("--out", type=click.Path(file_okay=False), default="data", show_default=True)
@seed_opt
@force_opt
def gen_data(config_path, preset, out, seed, force):
    """Sample train/test instances and solve them densely."""
    from .generators import build_corpus, write_corpus

    cfg = _config(config_path, preset)
    out = Path(out)
    if (out / "manifest.json").exists() and not force:
        _fail(f"{out} already holds a corpus; pass --force to regenerate")
    master = cfg.corpus.seed if seed is None else seed
    corpus = build_corpus(problem_spec(cfg), cfg.corpus.train, cfg.corpus.test, master)
    manifest = write_corpus(corpus, out)
    click.echo(f"wrote {manifest['train']} train and {manifest['test']} test instances to {out} "
               f"({corpus.solve_seconds:.1f}s of solves)")


@main.command()
@config_opt
@preset_opt
@corpus_opt
@click.option("--out", type=click.Path(file_okay=False), default="results", show_default=True)
@seed_opt
@force_opt
def pretrain(config_path, preset, corpus_dir, out, seed, force):
    """Imitation-pretrain the agent on oracle demonstrations."""
    from .acquisition import save_agent
    from .harness import pretrain_agent, run_config_from

    cfg = _config(config_path, preset, seed)
    corpus = _read_corpus(Path(corpus_dir), cfg)
    rc = run_config_from(cfg)
    d = Path(out) / "agents" / corpus.spec.kind.value
    d.mkdir(parents=True, exist_ok=True)
    for s in rc.seeds:
        path = d / f"{s}.bin"
        if path.exists() and not force:
            _fail(f"{path} exists; pass --force to overwrite")
        agent, acc = pretrain_agent(corpus, rc, s, report=True)
        save_agent(path, agent)
        click.echo(f"seed {s}: demonstration agreement {acc:.3f} -> {path}")


@main.command()
@config_opt
@preset_opt
@corpus_opt
@click.option("--out", type=click.Path(file_okay=False), default="results", show_default=True)
@click.option("--method", type=str, default=None, help="Override run.method.")
@seed_opt
@force_opt
def run(config_path, preset, corpus_dir, out, method, seed, force):
    """Run the acquisition loop for every configured seed."""
    from .harness import aggregate, run_active_learning, run_config_from

    cfg = _config(config_path, preset, seed, {"method": method} if method else None)
    corpus = _read_corpus(Path(corpus_dir), cfg)
    rc = run_config_from(cfg)
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "config.yaml").write_text(dump_config(cfg))
    agents = Path(out) / "agents" / corpus.spec.kind.value
    try:
        curves = run_active_learning(corpus, rc, Path(out), force, agents if agents.is_dir() else None)
    except ValueError as exc:
        _fail(str(exc))
    if len(curves) > 1:
        last = aggregate(curves)[-1]
        click.echo(f"{rc.method}: final RMSE {last.rmse_mean:.5f} +- {last.rmse_std:.5f} over {len(curves)} seeds")
    else:
        (s, c), = curves.items()
        click.echo(f"{rc.method} seed {s}: final RMSE {c[-1].rmse:.5f}")


@main.command()
@config_opt
@preset_opt
@corpus_opt
@click.option("--out", type=click.Path(file_okay=False), default="results", show_default=True)
@seed_opt
@force_opt
def sweep(config_path, preset, corpus_dir, out, seed, force):
    """Repeat the configured run for each budget in sweep.budgets."""
    from .harness import median_curve, run_budget_sweep, run_config_from

    cfg = _config(config_path, preset, seed)
    corpus = _read_corpus(Path(corpus_dir), cfg)
    rc = run_config_from(cfg)
    res = run_budget_sweep(corpus, rc, tuple(cfg.sweep.budgets), cfg.sweep.total_budget, Path(out), force)
    for b, curves in res.items():
        click.echo(f"B={b}: median final RMSE {median_curve(curves)[-1]:.5f}")


@main.command()
@click.argument("results_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_file", type=click.Path(dir_okay=False))
@click.option("--x", "x_axis", type=click.Choice(["iteration", "solver_time", "queries"]), default="iteration")
@click.option("--overlay", "overlay_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="A single run directory; plots its selections on the input fields instead.")
@click.option("--corpus", "corpus_dir", type=click.Path(file_okay=False), default="data")
@click.option("--iteration", type=int, default=1, help="Overlay: iteration to show.")
@click.option("--count", type=int, default=4, help="Overlay: number of instances.")
def plot(results_dir, out_file, x_axis, overlay_dir, corpus_dir, iteration, count):
    """Render learning curves (or a selection overlay) to SVG."""
    from .plotting import collect_curves, plot_curves, plot_selections

    if overlay_dir is not None:
        from .generators import read_corpus
        from .harness import read_selections

        sel_path = Path(overlay_dir) / "selections.csv"
        if not sel_path.exists():
            _fail(f"no selections.csv in {overlay_dir}")
        sels = [s for s in read_selections(sel_path) if s.iteration == iteration][:count]
        if not sels:
            _fail(f"no selections recorded for iteration {iteration}")
        corpus = read_corpus(Path(corpus_dir))
        if corpus.spec.kind.value == "darcy":
            _fail("selection overlays are drawn for 1D problems only")
        inputs = [corpus.train[s.instance_id].input for s in sels]
        plot_selections(inputs, sels, corpus.spec.grid().coords, Path(out_file))
    else:
        results = collect_curves(Path(results_dir))
        if not results:
            _fail(f"no curve.csv files under {results_dir}")
        plot_curves(results, Path(out_file), x_axis)
    click.echo(f"wrote {out_file}")


@main.command("validate-solver")
@click.option("--instances", type=int, default=50, show_default=True)
@click.option("--budget", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the summary as JSON.")
def validate_solver(instances, budget, seed, as_json):
    """Compare non-uniform Burgers solves on oracle subsets with dense solves."""
    summary = solver_fidelity(instances, budget, seed)
    if as_json:
        click.echo(json.dumps(summary))
    else:
        click.echo(f"MAE {summary['mae_mean']:.3e} +- {summary['mae_std']:.3e}, RMSE {summary['rmse']:.3e} "
                   f"over {instances} instances (B={budget})")


def solver_fidelity(instances: int = 50, budget: int = 60, seed: int = 0, spec=None) -> dict:
    """Non-uniform solve on oracle-policy subsets vs the dense solution at the same nodes."""
    from .acquisition import ActionSpace, oracle_policy
    from .core import ProblemSpec
    from .generators import burgers_ic, instance_rng, sample_burgers_params
    from .solvers import burgers_solve_nonuniform, burgers_solve_uniform

    spec = spec or ProblemSpec()
    grid = spec.grid()
    space = ActionSpace.for_spec(spec)
    maes, errs = [], []
    for i in range(instances):
        x = burgers_ic(*sample_burgers_params(instance_rng(seed, 2, i)), grid)
        dense = burgers_solve_uniform(x, spec.burgers)
        idx = np.sort(oracle_policy(space, budget, x))
        u = burgers_solve_nonuniform(x[idx], grid.coords[idx], spec.burgers)
        e = u - dense[idx]
        maes.append(float(np.mean(np.abs(e))))
        errs.append(e)
    allerr = np.concatenate(errs)
    return {"mae_mean": float(np.mean(maes)), "mae_std": float(np.std(maes)),
            "rmse": float(np.sqrt(np.mean(allerr**2))), "instances": instances, "budget": budget}


if __name__ == "__main__":
    main()
