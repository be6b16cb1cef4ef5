"""Active-learning outer loop, budget sweeps, and multi-seed aggregation.

Each (method, seed) run lives in its own directory and checkpoints after
every iteration. Every random draw of iteration k comes from a stream keyed
by (seed, k), so a resumed run replays exactly what an uninterrupted one
would have done.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import (
    ActionSpace,
    AgentConfig,
    DQNAgent,
    agreement,
    demonstrations_from_episodes,
    env_reset,
    env_step,
    episode_transitions,
    imitation_pretrain,
    load_agent,
    oracle_policy,
    save_agent,
    select_action,
    select_gradient,
    select_intensity,
    select_random,
    select_uniform,
    select_variance,
    train_step,
    write_training_log,
)
from .container import atomic_write, read_dataset, write_dataset
from .core import Dataset, LabeledSample, ProblemKind, SelectionMask, restrict
from .generators import Corpus, dense_solve
from .reward import RewardConfig, episode_reward, read_reward_log, write_reward_log
from .solvers import burgers_solve_nonuniform
from .surrogate import RidgeConfig, evaluate, fit_dataset

log = logging.getLogger(__name__)

# stream tags under SeedSequence([seed, tag, ...])
_POOL_STREAM = 11
_IMITATION_STREAM = 12
_ITERATION_STREAM = 13


@dataclass(frozen=True)
class RunConfig:
    method: str = "rlmesh"
    iterations: int = 18
    instances_per_iteration: int = 50
    budget: int = 60
    retrain_interval: int = 1
    pretrain_size: int = 100
    holdout_size: int = 50
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    solver_mode: str = "oracle_uniform"
    surrogate: RidgeConfig = field(default_factory=RidgeConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    reward_mode: str = "episode"
    agent: AgentConfig = field(default_factory=AgentConfig)
    updates_per_episode: int | None = None
    oracle_field: str = "residual"
    oracle_magnitude: float = 1.0
    oracle_coverage: float | None = 2.0
    demo_instances: int = 100
    schedule: tuple[int, ...] | None = None  # per-iteration instance counts, overrides the constant

    def __post_init__(self):
        from .config import METHODS

        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("iterations", "instances_per_iteration", "budget", "retrain_interval", "pretrain_size",
                     "holdout_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.solver_mode not in ("oracle_uniform", "nonuniform"):
            raise ValueError(f"unknown solver mode {self.solver_mode!r}")
        if self.reward_mode not in ("episode", "batch"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.oracle_field not in ("residual", "input"):
            raise ValueError(f"unknown oracle field {self.oracle_field!r}")
        if self.schedule is not None and len(self.schedule) != self.iterations:
            raise ValueError("schedule length must equal the iteration count")

    def per_iteration(self) -> list[int]:
        return list(self.schedule) if self.schedule is not None else [self.instances_per_iteration] * self.iterations

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_config_from(cfg) -> RunConfig:
    """RunConfig from a validated ExperimentConfig."""
    from .config import agent_config, reward_config, ridge_config

    r = cfg.run
    return RunConfig(
        method=r.method, iterations=r.iterations, instances_per_iteration=r.instances_per_iteration,
        budget=r.budget, retrain_interval=r.retrain_interval, pretrain_size=r.pretrain_size,
        holdout_size=cfg.proxy.holdout, seeds=tuple(r.seeds), solver_mode=r.solver_mode,
        surrogate=ridge_config(cfg.surrogate, cfg.problem.kind), reward=reward_config(cfg),
        reward_mode=cfg.proxy.reward_mode, agent=agent_config(cfg),
        updates_per_episode=cfg.agent.updates_per_episode, oracle_field=cfg.oracle.field,
        oracle_magnitude=cfg.oracle.magnitude, oracle_coverage=cfg.oracle.coverage,
        demo_instances=cfg.oracle.demo_instances,
    )


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    samples: int  # dataset size after the iteration
    queries: int  # cumulative solver point queries, pretraining included
    rmse: float
    solver_time: float
    seed: int
    method: str = ""


CURVE_FIELDS = ("iteration", "method", "seed", "samples", "queries", "rmse", "solver_time")


def write_curve(path: Path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for p in points:
            w.writerow((p.iteration, p.method, p.seed, p.samples, p.queries, repr(p.rmse), repr(p.solver_time)))


def read_curve(path: Path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        return [CurvePoint(int(r["iteration"]), int(r["samples"]), int(r["queries"]), float(r["rmse"]),
                           float(r["solver_time"]), int(r["seed"]), r["method"]) for r in csv.DictReader(fh)]


@dataclass(frozen=True)
class Selection:
    iteration: int
    instance_id: int
    indices: tuple[int, ...]


def write_selections(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "instance_id", "indices"))
        for s in rows:
            w.writerow((s.iteration, s.instance_id, " ".join(map(str, s.indices))))


def read_selections(path: Path) -> list[Selection]:
    with open(path, newline="") as fh:
        return [Selection(int(r["iteration"]), int(r["instance_id"]), tuple(int(v) for v in r["indices"].split()))
                for r in csv.DictReader(fh)]


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def corpus_hash(corpus: Corpus) -> str:
    """Content hash of the corpus samples, independent of where it is stored."""
    h = hashlib.sha256()
    for ds in (corpus.train, corpus.test):
        for s in ds:
            h.update(s.input.tobytes())
            h.update(np.asarray(s.mask.indices, dtype=np.int64).tobytes())
            h.update(s.observed.tobytes())
    return h.hexdigest()


def query_solver(corpus: Corpus, sample_index: int, mask: SelectionMask, mode: str) -> tuple[np.ndarray, float]:
    """Solution values at the mask and the solver wall time charged for them.

    ``oracle_uniform`` reads the precomputed dense solution and charges no
    time. ``nonuniform`` runs the Burgers solver on the selected nodes only;
    the other problems have no sparse solver, so they re-solve densely.
    """
    s = corpus.train[sample_index]
    if mode == "oracle_uniform":
        return restrict(s.dense_output(), mask), 0.0
    spec = corpus.spec
    t0 = time.perf_counter()
    if spec.kind is ProblemKind.BURGERS:
        idx = np.asarray(mask.indices)
        order = np.argsort(idx)
        nodes = spec.grid().coords[idx[order]]
        vals = burgers_solve_nonuniform(s.input[idx[order]], nodes, spec.burgers)
        out = np.empty(idx.size)
        out[order] = vals
    else:
        out = restrict(dense_solve(spec, s.input), mask)
    return out, time.perf_counter() - t0


class _Context:
    """Per-seed state shared by the selectors."""

    def __init__(self, corpus: Corpus, cfg: RunConfig, seed: int):
        self.corpus = corpus
        self.cfg = cfg
        self.seed = seed
        self.spec = corpus.spec
        self.grid = corpus.spec.grid()
        self.space = ActionSpace.for_spec(corpus.spec)
        p, h = cfg.pretrain_size, cfg.holdout_size
        need = p + h + sum(cfg.per_iteration())
        if need > len(corpus.train):
            raise ValueError(f"run needs {need} training instances, corpus has {len(corpus.train)}")
        self.pretrain = corpus.train[:p]
        self.holdout = corpus.train[p:p + h]
        pool = np.arange(p + h, len(corpus.train))
        self.order = _stream(seed, _POOL_STREAM).permutation(pool)
        dense = self.pretrain.dense_outputs()
        self.location_var = self.space.coarsen(dense.var(axis=0))
        self.surrogate = None
        self.proxy = None

    def batches(self):
        start = 0
        for k, m in enumerate(self.cfg.per_iteration(), start=1):
            yield k, self.order[start:start + m].tolist()
            start += m

    def oracle_field(self, x: np.ndarray, truth: np.ndarray) -> np.ndarray:
        if self.cfg.oracle_field == "input":
            return self.space.coarsen(x)
        return self.space.coarsen(truth - self.surrogate.predict(x))

    def oracle_actions(self, field_values: np.ndarray, budget: int) -> np.ndarray:
        return oracle_policy(self.space, budget, field_values, self.cfg.oracle_magnitude, self.cfg.oracle_coverage)


def build_demonstrations(ctx: _Context):
    """Oracle episodes on the pretraining instances.

    Residual fields come from two-fold cross-fitting on the pretraining set so
    no extra solver queries are spent.
    """
    cfg = ctx.cfg
    m = min(cfg.demo_instances, len(ctx.pretrain))
    pre = ctx.pretrain
    fields = {}
    if cfg.oracle_field == "residual":
        half = len(pre) // 2
        folds = [(list(range(half)), list(range(half, len(pre)))), (list(range(half, len(pre))), list(range(half)))]
        if half == 0:
            folds = [(list(range(len(pre))), list(range(len(pre))))]
        for fit_idx, res_idx in folds:
            model = fit_dataset(pre.subset(fit_idx), ctx.grid, cfg.surrogate)
            pred = model.predict(pre.subset(res_idx).inputs())
            for r, i in enumerate(res_idx):
                fields[i] = ctx.space.coarsen(pre[i].dense_output() - pred[r])
    episodes = []
    for i in range(m):
        x = pre[i].input
        f = fields[i] if fields else ctx.space.coarsen(x)
        st = env_reset(x, ctx.space, cfg.budget)
        episodes.append((st.encoded, ctx.oracle_actions(f, cfg.budget), cfg.budget))
    return demonstrations_from_episodes(episodes)


def pretrain_agent(corpus: Corpus, cfg: RunConfig, seed: int, report: bool = False):
    """Fresh agent after imitation pretraining; with ``report`` also its demonstration agreement."""
    ctx = _Context(corpus, cfg, seed)
    ctx.surrogate = fit_dataset(ctx.pretrain, ctx.grid, cfg.surrogate)
    agent = DQNAgent(ctx.space.n_actions, cfg.agent, seed)
    demos = build_demonstrations(ctx)
    imitation_pretrain(agent, demos, _stream(seed, _IMITATION_STREAM))
    if report:
        return agent, agreement(agent, demos)
    return agent


def _initial_agent(corpus: Corpus, cfg: RunConfig, seed: int, agent_dir: Path | None) -> DQNAgent:
    """Reuse a stored pretrained agent when it matches the configuration, else pretrain now."""
    if agent_dir is not None and (Path(agent_dir) / f"{seed}.bin").exists():
        agent = load_agent(Path(agent_dir) / f"{seed}.bin")
        if agent.cfg == cfg.agent and agent.updates == 0 and len(agent.buffer) == 0:
            return agent
        log.warning("stored agent for seed %d does not match the configuration; pretraining again", seed)
    return pretrain_agent(corpus, cfg, seed)


def _select(ctx: _Context, method: str, x: np.ndarray, truth: np.ndarray, rng, agent=None):
    """Actions for one instance; for rlmesh also the visited states."""
    b = ctx.cfg.budget
    sp = ctx.space
    if method == "uniform":
        return select_uniform(sp, b), None
    if method == "random":
        return select_random(sp, b, rng), None
    if method == "gradient":
        return select_gradient(sp, b, sp.coarsen(x)), None
    if method == "intensity":
        return select_intensity(sp, b, sp.coarsen(x)), None
    if method == "variance":
        v = float(ctx.proxy.posterior_variance(x)[0])
        return select_variance(sp, b, v, ctx.location_var), None
    if method == "oracle":
        return ctx.oracle_actions(ctx.oracle_field(x, truth), b), None
    if method == "rlmesh":
        st = env_reset(x, sp, b)
        states, acts = [], []
        done = False
        while not done:
            a = select_action(agent, st, agent.epsilon, rng)
            agent.steps += 1
            states.append(st)
            acts.append(a)
            st, done = env_step(st, a)
        return np.array(acts), states
    raise ValueError(f"method {method!r} has no selector")


@dataclass
class _SeedState:
    iteration: int = 0
    solver_time: float = 0.0
    queries: int = 0
    curve: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    selections: list = field(default_factory=list)


def _seed_dir(root: Path, corpus: Corpus, method: str, seed: int) -> Path:
    return Path(root) / "runs" / corpus.spec.kind.value / method / str(seed)


def _write_outputs(d: Path, st: _SeedState, agent) -> None:
    write_curve(d / "curve.csv", st.curve)
    write_selections(d / "selections.csv", st.selections)
    if agent is not None:
        write_reward_log(d / "rewards.csv", st.rewards)
        write_training_log(d / "train_log.csv", agent)


def _save_checkpoint(d: Path, st: _SeedState, acquired: Dataset, agent, fingerprint: str) -> None:
    ck = d / "checkpoint"
    ck.mkdir(parents=True, exist_ok=True)
    atomic_write(ck / "dataset.bin", lambda p: write_dataset(p, acquired))
    if agent is not None:
        atomic_write(ck / "agent.bin", lambda p: save_agent(p, agent))
    _write_outputs(d, st, agent)
    state = {"iteration": st.iteration, "solver_time": st.solver_time, "queries": st.queries,
             "fingerprint": fingerprint}
    atomic_write(ck / "state.json", lambda p: Path(p).write_text(json.dumps(state)))


def _load_checkpoint(d: Path, fingerprint: str):
    ck = d / "checkpoint"
    if not (ck / "state.json").exists():
        return None
    state = json.loads((ck / "state.json").read_text())
    if state["fingerprint"] != fingerprint:
        log.warning("checkpoint in %s belongs to a different configuration; starting over", d)
        return None
    k = state["iteration"]
    st = _SeedState(k, state["solver_time"], state["queries"])
    st.curve = [p for p in read_curve(d / "curve.csv") if p.iteration <= k]
    st.selections = [s for s in read_selections(d / "selections.csv") if s.iteration <= k]
    acquired = read_dataset(ck / "dataset.bin")
    agent = None
    if (ck / "agent.bin").exists():
        agent = load_agent(ck / "agent.bin")
        st.rewards = [r for r in read_reward_log(d / "rewards.csv") if r.iteration <= k]
        with open(d / "train_log.csv", newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if int(r["update"]) <= agent.updates]
        agent.log = [(int(r["update"]), float(r["loss"]), float(r["epsilon"]), int(r["buffer_size"])) for r in rows]
    return st, acquired, agent


def run_seed(corpus: Corpus, cfg: RunConfig, seed: int, out: Path | None = None, force: bool = False,
             stop_after: int | None = None, agent_dir: Path | None = None) -> list[CurvePoint]:
    """One seed of one method. ``stop_after`` ends early (after checkpointing) to simulate interruption."""
    ctx = _Context(corpus, cfg, seed)
    method = cfg.method
    fp = cfg.fingerprint()
    d = _seed_dir(out, corpus, method, seed) if out is not None else None
    resumed = None
    if d is not None:
        d.mkdir(parents=True, exist_ok=True)
        if force and (d / "checkpoint" / "state.json").exists():
            (d / "checkpoint" / "state.json").unlink()
        resumed = _load_checkpoint(d, fp)

    dataset = ctx.pretrain.copy()
    n_points = corpus.spec.field_size
    agent = None
    if resumed is not None:
        st, acquired, agent = resumed
        dataset.extend(acquired)
    else:
        st = _SeedState(queries=len(ctx.pretrain) * n_points)
        if method == "rlmesh":
            agent = _initial_agent(corpus, cfg, seed, agent_dir)

    # the surrogate in force is the one fit at the last retrain boundary
    last_fit = (st.iteration // cfg.retrain_interval) * cfg.retrain_interval
    ctx.surrogate = fit_dataset(Dataset(dataset.kind, dataset.grid_size,
                                        [s for s in dataset if s.iteration <= last_fit]), ctx.grid, cfg.surrogate)
    pretrain_rmse = evaluate(fit_dataset(ctx.pretrain, ctx.grid, cfg.surrogate), corpus.test)
    if d is not None:
        manifest = {
            "method": method, "seed": seed, "config": json.loads(json.dumps(asdict(cfg), default=str)),
            "fingerprint": fp, "corpus_sha256": corpus_hash(corpus), "pretrain_rmse": pretrain_rmse,
            "package_version": __version__,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    eps_old = None
    if method in ("rlmesh", "variance"):
        ctx.proxy = fit_dataset(dataset, ctx.grid, cfg.reward.proxy)
        if method == "rlmesh":
            eps_old = evaluate(ctx.proxy, ctx.holdout)
    updates = cfg.updates_per_episode if cfg.updates_per_episode is not None else cfg.budget

    for k, ids in ctx.batches():
        if k <= st.iteration:
            continue
        rng = _stream(seed, _ITERATION_STREAM, k)
        new: list[LabeledSample] = []
        episodes = []
        for j, iid in enumerate(ids):
            s = corpus.train[iid]
            truth = s.dense_output()
            if method == "full_information":
                mask = SelectionMask.full(n_points)
                actions, states = None, None
            else:
                actions, states = _select(ctx, method, s.input, truth, rng, agent)
                mask = ctx.space.to_grid_mask(actions, cfg.budget)
            values, dt = query_solver(corpus, iid, mask, cfg.solver_mode)
            st.solver_time += dt
            st.queries += len(mask)
            sample = LabeledSample(s.input, mask, values, instance_id=iid, seed=seed, iteration=k)
            new.append(sample)
            st.selections.append(Selection(k, iid, mask.indices))
            if method == "rlmesh":
                episodes.append((states, actions))
                if cfg.reward_mode == "episode":
                    after = Dataset(dataset.kind, dataset.grid_size, [*dataset, sample])
                    rec = episode_reward(dataset, after, ctx.holdout, ctx.grid, cfg.reward, eps_old, k, j)
                    _learn(agent, states, actions, rec.scaled, updates, rng)
                    st.rewards.append(rec)
        if method == "rlmesh" and cfg.reward_mode == "batch":
            after = Dataset(dataset.kind, dataset.grid_size, [*dataset, *new])
            rec = episode_reward(dataset, after, ctx.holdout, ctx.grid, cfg.reward, eps_old, k, 0)
            for j, (states, actions) in enumerate(episodes):
                _learn(agent, states, actions, rec.scaled, updates, rng)
                st.rewards.append(replace(rec, episode=j))
        dataset.extend(new)
        if ctx.proxy is not None:
            ctx.proxy = fit_dataset(dataset, ctx.grid, cfg.reward.proxy)
            if method == "rlmesh":
                eps_old = evaluate(ctx.proxy, ctx.holdout)
        if k % cfg.retrain_interval == 0:
            ctx.surrogate = fit_dataset(dataset, ctx.grid, cfg.surrogate)
        err = evaluate(ctx.surrogate, corpus.test)
        st.iteration = k
        st.curve.append(CurvePoint(k, len(dataset), st.queries, err, st.solver_time, seed, method))
        log.info("%s seed %d iteration %d: rmse %.5f", method, seed, k, err)
        if d is not None:
            _save_checkpoint(d, st, dataset[len(ctx.pretrain):], agent, fp)
        if stop_after is not None and k >= stop_after:
            break
    return st.curve


def _learn(agent: DQNAgent, states, actions, reward: float, updates: int, rng) -> None:
    for t in episode_transitions(states, list(actions), reward, agent.cfg.gamma):
        agent.buffer.push(t)
    for _ in range(updates):
        train_step(agent, rng)


def run_active_learning(corpus: Corpus, cfg: RunConfig, out: Path | None = None, force: bool = False,
                        agent_dir: Path | None = None) -> dict[int, list[CurvePoint]]:
    return {seed: run_seed(corpus, cfg, seed, out, force, agent_dir=agent_dir) for seed in cfg.seeds}


def sweep_schedule(budget: int, iterations: int, total_budget: int) -> tuple[int, ...]:
    """Spread floor(total / B) instances over the iterations, earlier ones taking the remainder."""
    count = total_budget // budget
    if count < iterations:
        raise ValueError(f"total budget {total_budget} gives {count} instances for {iterations} iterations")
    base, extra = divmod(count, iterations)
    return tuple(base + (1 if k < extra else 0) for k in range(iterations))


def run_budget_sweep(corpus: Corpus, cfg: RunConfig, budgets=(20, 40, 60, 80, 100),
                     total_budget: int | None = None, out: Path | None = None,
                     force: bool = False) -> dict[int, dict[int, list[CurvePoint]]]:
    """Curves keyed by budget then seed.

    With ``total_budget`` each budget acquires floor(total / B) instances;
    otherwise every budget uses the configured instance count.
    """
    results = {}
    for b in budgets:
        sched = sweep_schedule(b, cfg.iterations, total_budget) if total_budget else None
        c = replace(cfg, budget=b, schedule=sched)
        root = Path(out) / f"sweep_B{b}" if out is not None else None
        results[b] = run_active_learning(corpus, c, root, force)
    return results


@dataclass(frozen=True)
class AggregateRow:
    iteration: int
    rmse_mean: float
    rmse_std: float
    time_mean: float
    time_std: float
    samples: float


def aggregate(curves: dict[int, list[CurvePoint]] | list[list[CurvePoint]]) -> list[AggregateRow]:
    """Per-iteration mean and sample standard deviation across seeds."""
    runs = list(curves.values()) if isinstance(curves, dict) else list(curves)
    if len(runs) < 2:
        raise ValueError("aggregation needs at least 2 seeds")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError("all seeds must have the same number of iterations")
    rows = []
    for i in range(lengths.pop()):
        pts = sorted((r[i] for r in runs), key=lambda p: p.seed)
        e = np.array([p.rmse for p in pts])
        t = np.array([p.solver_time for p in pts])
        rows.append(AggregateRow(pts[0].iteration, float(e.mean()), float(e.std(ddof=1)),
                                 float(t.mean()), float(t.std(ddof=1)), float(np.mean([p.samples for p in pts]))))
    return rows


def aggregate_methods(results: dict[str, dict[int, list[CurvePoint]]]) -> dict[str, list[AggregateRow]]:
    seed_sets = {m: frozenset(c) for m, c in results.items()}
    if len(set(seed_sets.values())) > 1:
        raise ValueError("methods were run with different seed sets")
    return {m: aggregate(c) for m, c in results.items()}


def iterations_to_threshold(curve, tau: float) -> int | None:
    if tau <= 0:
        raise ValueError("threshold must be positive")
    for p in curve:
        if p.rmse <= tau:
            return p.iteration
    return None


def median_curve(curves: dict[int, list[CurvePoint]]) -> np.ndarray:
    return np.median(np.array([[p.rmse for p in c] for c in curves.values()]), axis=0)
