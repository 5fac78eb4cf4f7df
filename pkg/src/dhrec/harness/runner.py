"""Dataset generation, training loops, evaluation and report comparison."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

import dhrec
from dhrec import env as sim
from dhrec.agents.baselines import RandomAgent
from dhrec.agents.dfm import DfmAgent, DfmModel, FieldEncoder, dfm_train
from dhrec.agents.features import StateEncoder
from dhrec.agents.replay import ReplayBuffer
from dhrec.agents.sac import SacAgent
from dhrec.agents.sarsa import QTable, SarsaAgent
from dhrec.agents.slateq import LogitChoiceModel, QBarTable, SlateQAgent, fit_choice_model
from dhrec.checkpoint import load_checkpoint, save_checkpoint
from dhrec.core import rng as streams
from dhrec.core.config import ExperimentConfig
from dhrec.core.types import Action
from dhrec.evaluation import MetricsReport, build_queries, summarize, time_split
from dhrec.harness.logio import InteractionLogRecord, read_log, write_log
from dhrec.harness.orchestrator import run_pool

AGENTS = ("sac", "sarsa", "slateq", "dfm", "random")
ONLINE_AGENTS = ("sac", "sarsa", "slateq")

LOG_NAME = "interactions.jsonl"
CHECKPOINT_NAME = "checkpoint.json"
REPORT_NAME = "metrics.json"
MANIFEST_NAME = "manifest.json"


class RunError(RuntimeError):
    pass


class ConfigMismatchError(RunError):
    pass


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    code_version: str
    start_step: int
    end_step: int
    outputs: dict[str, str] = field(default_factory=dict)
    agent: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_NAME
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def population(cfg: ExperimentConfig) -> sim.PopulationParams:
    return sim.PopulationParams.from_config(cfg)


def _out_dir(out: str | Path) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(command, cfg, start, end, outputs, agent=None) -> RunManifest:
    return RunManifest(command, cfg.digest(), cfg.seed, dhrec.__version__, start, end, outputs, agent)


# ---------------------------------------------------------------------------
# dataset generation


def simulate_log(cfg: ExperimentConfig, workers: int = 1) -> list[InteractionLogRecord]:
    """Logged sessions under the configured logging policy, ordered by (session, step)."""
    pop = population(cfg)
    n = cfg.n_types
    if cfg.logging_policy == "uniform":

        def decide(live):
            return [Action(int(s.policy_rng.integers(n))) for s in live]

    else:
        scorer = load_agent(load_checkpoint(cfg.logging_checkpoint), cfg)

        def decide(live):
            p = scorer.scores([s.context for s in live], np.array([s.state.counts for s in live]))
            p = p / p.sum(axis=1, keepdims=True)
            out = []
            for row, s in zip(p, live):
                k = int(np.searchsorted(np.cumsum(row), s.policy_rng.random(), side="right"))
                out.append(Action(min(k, n - 1)))
            return out

    res = run_pool(
        pop, cfg.seed, decide,
        namespace=streams.DATASET_SESSIONS,
        pool_size=cfg.pool_size,
        max_sessions=cfg.n_sessions,
        workers=workers,
    )
    sessions = sorted(res.finished, key=lambda s: s.session_id)
    return [InteractionLogRecord.from_transition(t) for s in sessions for t in s.log]


def generate_dataset(cfg: ExperimentConfig, out: str | Path, workers: int = 1) -> Path:
    out_dir = _out_dir(out)
    records = simulate_log(cfg, workers)
    path = out_dir / LOG_NAME
    header = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "logging_policy": cfg.logging_policy,
        "n_sessions": cfg.n_sessions,
        "n_records": len(records),
    }
    try:
        write_log(path, header, records)
    except OSError as exc:
        raise RunError(f"cannot write interaction log to {path}: {exc}") from exc
    _manifest("generate", cfg, 0, len(records), {"log": LOG_NAME}).write(out_dir)
    return path


def load_dataset(cfg: ExperimentConfig, path: str | Path) -> list[InteractionLogRecord]:
    header, records = read_log(path)
    if header.get("config_digest") != cfg.digest() or header.get("seed") != cfg.seed:
        raise ConfigMismatchError(
            f"log {path} was generated with digest {header.get('config_digest')} seed {header.get('seed')},"
            f" config has {cfg.digest()} seed {cfg.seed}"
        )
    return records


# ---------------------------------------------------------------------------
# agents and checkpoints


def make_encoder(cfg: ExperimentConfig) -> StateEncoder:
    return StateEncoder(cfg.n_types, cfg.user_buckets, cfg.store_buckets, cfg.count_cap)


def make_sac(cfg: ExperimentConfig) -> SacAgent:
    return SacAgent(
        make_encoder(cfg), cfg.hidden, cfg.gamma, cfg.alpha, cfg.lr_actor, cfg.lr_critic, cfg.tau,
        rng=streams.substream(cfg.seed, streams.INIT),
    )


def make_dfm(cfg: ExperimentConfig) -> DfmAgent:
    enc = FieldEncoder(cfg.n_types, cfg.user_buckets, cfg.store_buckets)
    model = DfmModel(enc.n_features, enc.n_fields, cfg.factor_dim, cfg.dfm_hidden, rng=streams.substream(cfg.seed, streams.INIT))
    return DfmAgent(enc, model)


def checkpoint_payload(kind: str, agent) -> dict:
    if kind == "sac":
        return {"networks": agent.networks(), "extra": {"encoder": agent.encoder.to_dict(), "hyper": agent.hyper()}}
    if kind == "sarsa":
        return {
            "tables": {"q": agent.table.to_dict()},
            "extra": {"lr": agent.lr, "gamma": agent.gamma, "epsilon": agent.epsilon},
        }
    if kind == "slateq":
        return {
            "tables": {"qbar": agent.qbar.to_dict()},
            "extra": {
                "choice_model": agent.choice_model.to_dict(),
                "n_types": len(agent.items),
                "k": agent.k, "gamma": agent.gamma, "lr": agent.lr,
                "epsilon": agent.epsilon, "mode": agent.mode,
            },
        }
    if kind == "dfm":
        m = agent.model
        return {
            "networks": {"deep": m.deep},
            "tables": {"fm": {"w0": m.w0, "w": m.w.tolist(), "v": m.v.tolist()}},
            "extra": {
                "encoder": agent.encoder.to_dict(),
                "n_features": m.n_features, "n_fields": m.n_fields, "factor_dim": m.factor_dim,
            },
        }
    if kind == "random":
        return {"extra": {"n_types": agent.n_types}}
    raise RunError(f"unknown agent kind {kind!r}")


def load_agent(doc: dict, cfg: ExperimentConfig):
    kind, nets, tables, extra = doc["agent"], doc["networks"], doc["tables"], doc["extra"]
    if kind == "sac":
        return SacAgent.restore(StateEncoder.from_dict(extra["encoder"]), nets, extra["hyper"])
    if kind == "sarsa":
        table = QTable.from_dict(tables["q"])
        agent = SarsaAgent(table.n_actions, table.count_cap, extra["lr"], extra["gamma"], extra["epsilon"])
        agent.table = table
        return agent
    if kind == "slateq":
        agent = SlateQAgent(
            sim.type_catalog(extra["n_types"]), LogitChoiceModel.from_dict(extra["choice_model"]),
            extra["k"], extra["gamma"], extra["lr"], tables["qbar"]["count_cap"], extra["epsilon"], extra["mode"],
        )
        agent.qbar = QBarTable.from_dict(tables["qbar"])
        return agent
    if kind == "dfm":
        model = DfmModel(extra["n_features"], extra["n_fields"], extra["factor_dim"])
        fm = tables["fm"]
        model.w0 = fm["w0"]
        model.w = np.asarray(fm["w"], dtype=float)
        model.v = np.asarray(fm["v"], dtype=float).reshape(model.n_features, model.factor_dim)
        model.deep = nets["deep"]
        return DfmAgent(FieldEncoder.from_dict(extra["encoder"]), model)
    if kind == "random":
        return RandomAgent(extra["n_types"], cfg.seed)
    raise RunError(f"unknown agent kind {kind!r}")


# ---------------------------------------------------------------------------
# training


def _train_sac(cfg: ExperimentConfig, steps: int, workers: int) -> SacAgent:
    agent = make_sac(cfg)
    enc = agent.encoder
    buf = ReplayBuffer(cfg.replay_capacity, enc.dim)
    learner_rng = streams.substream(cfg.seed, streams.LEARNER)
    threshold = max(cfg.warmup, cfg.batch_size)

    def decide(live):
        x = enc.encode_batch([s.context for s in live], np.array([s.state.counts for s in live]))
        return [Action(a) for a in agent.act_batch(x, [s.policy_rng for s in live], explore=True)]

    def on_tick(tick, live, actions, outcomes):
        for t in outcomes:
            buf.add(
                enc.encode(t.context, t.state.counts), t.action.content_type_index, t.reward,
                enc.encode(t.context, t.next_state.counts), t.done,
            )
        if len(buf) >= threshold:
            for _ in range(cfg.updates_per_tick):
                agent.learn(buf.sample(cfg.batch_size, learner_rng))

    run_pool(
        population(cfg), cfg.seed, decide,
        namespace=streams.TRAIN_SESSIONS, pool_size=cfg.pool_size,
        max_ticks=steps, workers=workers, on_tick=on_tick, keep_finished=False,
    )
    return agent


def _train_sarsa(cfg: ExperimentConfig, steps: int, workers: int) -> SarsaAgent:
    agent = SarsaAgent(cfg.n_types, cfg.count_cap, cfg.sarsa_lr, cfg.gamma, cfg.sarsa_epsilon)
    pending = {}

    def decide(live):
        actions = [agent.act(s.state, explore=True, rng=s.policy_rng) for s in live]
        # updates wait until every live session has acted on the same table
        for s, a in zip(live, actions):
            t = pending.pop(s.session_id, None)
            if t is not None:
                agent.learn(t, a)
        return actions

    def on_tick(tick, live, actions, outcomes):
        for t in outcomes:
            if t.done:
                agent.learn(t, None)
            else:
                pending[t.session_id] = t

    run_pool(
        population(cfg), cfg.seed, decide,
        namespace=streams.TRAIN_SESSIONS, pool_size=cfg.pool_size,
        max_ticks=steps, workers=workers, on_tick=on_tick, keep_finished=False,
    )
    return agent


def fit_logged_choice_model(records: Sequence[InteractionLogRecord]) -> LogitChoiceModel:
    return fit_choice_model(
        np.array([r.action for r in records]),
        np.array([r.state for r in records]),
        np.array([r.reward for r in records]),
    )


def _train_slateq(cfg: ExperimentConfig, steps: int, workers: int, records) -> SlateQAgent:
    if not records:
        raise RunError("slateq needs a logged dataset to fit its choice model (pass --log)")
    train, _ = time_split(records, cfg.split_timestamp)
    model = fit_logged_choice_model(train or records)
    agent = SlateQAgent(
        sim.type_catalog(cfg.n_types), model, cfg.slate_size, cfg.gamma, cfg.slateq_lr, cfg.count_cap, cfg.sarsa_epsilon,
    )
    pending = {}

    def decide(live):
        slates = [agent.select(s.state.counts, explore=True, rng=s.policy_rng) for s in live]
        for s, slate in zip(live, slates):
            o = pending.pop(s.session_id, None)
            if o is not None:
                agent.learn(o.state.counts, o.slate, o.chosen, o.reward, o.next_state.counts, slate, False)
        return slates

    def on_tick(tick, live, slates, outcomes):
        for s, o in zip(live, outcomes):
            if o.chosen is None:
                continue
            if o.done:
                agent.learn(o.state.counts, o.slate, o.chosen, o.reward, o.next_state.counts, None, True)
            else:
                pending[s.session_id] = o

    run_pool(
        population(cfg), cfg.seed, decide,
        namespace=streams.TRAIN_SESSIONS, pool_size=cfg.pool_size, advance=sim.slate_step,
        max_ticks=steps, workers=workers, on_tick=on_tick, keep_finished=False,
    )
    return agent


def dfm_arrays(agent: DfmAgent, records: Sequence[InteractionLogRecord]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.array([agent.encoder.fields(r.context, r.action) for r in records], dtype=np.int64)
    return idx, np.array([r.reward for r in records])


def _train_dfm(cfg: ExperimentConfig, epochs: int, records) -> DfmAgent:
    if not records:
        raise RunError("dfm trains offline and needs a logged dataset (pass --log)")
    train, _ = time_split(records, cfg.split_timestamp)
    if not train:
        raise RunError(f"no training sessions start before split_timestamp={cfg.split_timestamp}")
    agent = make_dfm(cfg)
    if epochs > 0:
        idx, y = dfm_arrays(agent, train)
        dfm_train(agent.model, idx, y, epochs=epochs, lr=cfg.dfm_lr)
    return agent


def train_agent(
    cfg: ExperimentConfig,
    kind: str,
    steps: Optional[int] = None,
    records: Optional[Sequence[InteractionLogRecord]] = None,
    workers: int = 1,
):
    """Train one agent; ``steps`` counts pool ticks, or epochs for dfm."""
    if kind not in AGENTS:
        raise RunError(f"unknown agent kind {kind!r}; choose from {AGENTS}")
    if steps is None:
        steps = cfg.dfm_epochs if kind == "dfm" else cfg.train_steps
    if steps < 0:
        raise RunError("steps must be >= 0")
    if kind == "sac":
        return _train_sac(cfg, steps, workers)
    if kind == "sarsa":
        return _train_sarsa(cfg, steps, workers)
    if kind == "slateq":
        return _train_slateq(cfg, steps, workers, records)
    if kind == "dfm":
        return _train_dfm(cfg, steps, records)
    return RandomAgent(cfg.n_types, cfg.seed)


def run_training(
    cfg: ExperimentConfig,
    kind: str,
    out: str | Path,
    steps: Optional[int] = None,
    log_path: Optional[str | Path] = None,
    workers: int = 1,
) -> tuple[Path, RunManifest]:
    out_dir = _out_dir(out)
    records = load_dataset(cfg, log_path) if log_path else None
    if steps is None:
        steps = cfg.dfm_epochs if kind == "dfm" else cfg.train_steps
    agent = train_agent(cfg, kind, steps, records, workers)
    path = out_dir / CHECKPOINT_NAME
    save_checkpoint(path, agent=kind, config_digest=cfg.digest(), seed=cfg.seed, steps=steps, **checkpoint_payload(kind, agent))
    manifest = _manifest("train", cfg, 0, steps, {"checkpoint": CHECKPOINT_NAME}, kind)
    manifest.write(out_dir)
    return path, manifest


# ---------------------------------------------------------------------------
# evaluation


def _record_scorer(agent):
    def score(part):
        return agent.scores([r.context for r in part], np.array([r.state for r in part]))

    return score


def online_sessions(cfg: ExperimentConfig, agent, workers: int = 1) -> list[list]:
    """Fresh evaluation sessions driven by the agent's top-scored action."""

    def decide(live):
        s = agent.scores([x.context for x in live], np.array([x.state.counts for x in live]))
        return [Action(int(a)) for a in np.argmax(s, axis=1)]

    res = run_pool(
        population(cfg), cfg.seed, decide,
        namespace=streams.EVAL_SESSIONS, pool_size=cfg.pool_size,
        max_sessions=cfg.eval_sessions, workers=workers,
    )
    return [s.log for s in sorted(res.finished, key=lambda s: s.session_id)]


def evaluate_agent(
    cfg: ExperimentConfig,
    agent,
    kind: str,
    records: Sequence[InteractionLogRecord],
    workers: int = 1,
    ks: Sequence[int] = (1, 3, 5),
) -> MetricsReport:
    _, valid = time_split(records, cfg.split_timestamp)
    if not valid:
        raise RunError(f"no validation sessions start at or after split_timestamp={cfg.split_timestamp}")
    queries = build_queries(valid, _record_scorer(agent))
    sessions = online_sessions(cfg, agent, workers)
    entropy = None
    if kind == "sac":
        x = agent.encoder.encode_batch([r.context for r in valid], np.array([r.state for r in valid]))
        entropy = float(agent.entropy(x).mean())
    return summarize(kind, queries, sessions, cfg.digest(), cfg.seed, ks, entropy)


def run_eval(
    cfg: ExperimentConfig,
    checkpoint: str | Path,
    log_path: str | Path,
    out: Optional[str | Path] = None,
    workers: int = 1,
) -> MetricsReport:
    doc = load_checkpoint(checkpoint)
    if doc["config_digest"] != cfg.digest():
        raise ConfigMismatchError(
            f"checkpoint {checkpoint} was trained under config digest {doc['config_digest']}, "
            f"current config has {cfg.digest()}"
        )
    agent = load_agent(doc, cfg)
    report = evaluate_agent(cfg, agent, doc["agent"], load_dataset(cfg, log_path), workers)
    if out is not None:
        out_dir = _out_dir(out)
        (out_dir / REPORT_NAME).write_text(report.to_json(), encoding="utf-8")
        _manifest("eval", cfg, doc["steps"], doc["steps"], {"report": REPORT_NAME}, doc["agent"]).write(out_dir)
    return report


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonRow:
    seed: str
    mrr_a: float
    mrr_b: float
    hits1_a: float
    hits1_b: float
    conversion_a: float
    conversion_b: float

    @property
    def mrr_delta(self) -> float:
        return self.mrr_a - self.mrr_b

    @property
    def hits1_delta(self) -> float:
        return self.hits1_a - self.hits1_b

    @property
    def conversion_delta(self) -> float:
        return self.conversion_a - self.conversion_b


def compare(a: Sequence[MetricsReport], b: Sequence[MetricsReport]) -> list[ComparisonRow]:
    """Per-seed rows of A against B followed by a mean row."""
    if not a or len(a) != len(b):
        raise RunError("compare needs the same positive number of reports on each side")
    a = sorted(a, key=lambda r: r.seed)
    b = sorted(b, key=lambda r: r.seed)
    rows = []
    for ra, rb in zip(a, b):
        if ra.seed != rb.seed:
            raise RunError(f"seed mismatch: {ra.seed} vs {rb.seed}")
        if ra.config_digest != rb.config_digest:
            raise ConfigMismatchError(f"config digest mismatch for seed {ra.seed}")
        if set(ra.hits_at_k) != set(rb.hits_at_k) or 1 not in ra.hits_at_k:
            raise RunError(f"metric sets differ for seed {ra.seed}: {sorted(ra.hits_at_k)} vs {sorted(rb.hits_at_k)}")
        rows.append(
            ComparisonRow(
                str(ra.seed), ra.mrr, rb.mrr, ra.hits_at_k[1], rb.hits_at_k[1], ra.conversion_rate, rb.conversion_rate,
            )
        )
    n = len(rows)
    rows.append(
        ComparisonRow(
            "mean",
            *(math.fsum(getattr(r, f) for r in rows) / n for f in
              ("mrr_a", "mrr_b", "hits1_a", "hits1_b", "conversion_a", "conversion_b")),
        )
    )
    return rows


def format_comparison(rows: Sequence[ComparisonRow], name_a: str = "A", name_b: str = "B") -> str:
    head = (
        f"{'seed':>6}  {'MRR ' + name_a:>10} {'MRR ' + name_b:>10} {'dMRR':>8}  "
        f"{'H@1 ' + name_a:>10} {'H@1 ' + name_b:>10} {'dH@1':>8}  "
        f"{'conv ' + name_a:>10} {'conv ' + name_b:>10} {'dconv':>8}"
    )
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.seed:>6}  {r.mrr_a:10.4f} {r.mrr_b:10.4f} {r.mrr_delta:+8.4f}  "
            f"{100 * r.hits1_a:9.2f}% {100 * r.hits1_b:9.2f}% {100 * r.hits1_delta:+7.2f}p  "
            f"{r.conversion_a:10.4f} {r.conversion_b:10.4f} {r.conversion_delta:+8.4f}"
        )
    return "\n".join(lines) + "\n"
