import json
import math

import numpy as np
import pytest

from dhrec import env as sim
from dhrec.agents.baselines import OracleAgent, RandomAgent
from dhrec.checkpoint import load_checkpoint
from dhrec.core import rng as streams
from dhrec.core.config import ExperimentConfig, save_config
from dhrec.core.types import Action
from dhrec.evaluation import MetricsReport, mrr
from dhrec.harness import runner
from dhrec.harness.cli import main
from dhrec.harness.logio import FIELDS, InteractionLogRecord, LogFormatError, parse_record, read_log, write_log
from dhrec.harness.orchestrator import run_pool

SMALL = ExperimentConfig(n_sessions=150, eval_sessions=40, split_timestamp=30, train_steps=60, dfm_epochs=20, warmup=64, batch_size=32)


def random_record(g: np.random.Generator) -> InteractionLogRecord:
    n = int(g.integers(2, 10))
    state = tuple(int(c) for c in g.integers(0, 30, n))
    a = int(g.integers(n))
    nxt = list(state)
    nxt[a] += 1
    reward = float(g.integers(0, 2))
    alphabet = "abcxyz-_ \"\\/é中\U0001f600\n\t"
    uid = "".join(alphabet[int(i)] for i in g.integers(0, len(alphabet), int(g.integers(1, 12))))
    return InteractionLogRecord(
        session_id=int(g.integers(0, 2**40)), step=int(g.integers(0, 100)), user_id=uid, store_id=f"store-{a}",
        state=state, action=a, reward=reward, deal=bool(reward and g.random() < 0.3), next_state=tuple(nxt),
        done=bool(g.random() < 0.2), timestamp=int(g.integers(0, 10**6)),
    )


def test_record_round_trip_fuzz():
    g = np.random.default_rng(0)
    for _ in range(10_000):
        r = random_record(g)
        line = r.to_line()
        assert "\n" not in line and line.isascii()
        back = parse_record(line)
        assert back == r
        assert back.to_transition().is_valid()
        assert InteractionLogRecord.from_transition(back.to_transition()) == r


def test_record_field_order_is_fixed():
    r = random_record(np.random.default_rng(1))
    assert tuple(json.loads(r.to_line()).keys()) == FIELDS


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("deal"),
        lambda d: d.update(reward=0.5),
        lambda d: d.update(action=True),
        lambda d: d.update(state=[1, -1]),
        lambda d: d.update(user_id=""),
        lambda d: d.update(extra=1),
    ],
)
def test_bad_records_rejected(mutate):
    d = json.loads(random_record(np.random.default_rng(2)).to_line())
    mutate(d)
    with pytest.raises(LogFormatError):
        parse_record(json.dumps(d))


def test_reordered_keys_rejected():
    d = json.loads(random_record(np.random.default_rng(3)).to_line())
    with pytest.raises(LogFormatError):
        parse_record(json.dumps(dict(reversed(list(d.items())))))


def test_empty_dataset_has_header(tmp_path):
    cfg = SMALL.replace(n_sessions=0)
    path = runner.generate_dataset(cfg, tmp_path)
    header, records = read_log(path)
    assert records == [] and header["n_records"] == 0 and header["config_digest"] == cfg.digest()
    assert path.read_text().count("\n") == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"] == {"log": "interactions.jsonl"}


def test_generation_is_byte_identical(tmp_path):
    a = runner.generate_dataset(SMALL, tmp_path / "a")
    b = runner.generate_dataset(SMALL, tmp_path / "b", workers=4)
    assert a.read_bytes() == b.read_bytes()
    c = runner.generate_dataset(SMALL.replace(seed=1), tmp_path / "c")
    assert a.read_bytes() != c.read_bytes()


def test_generated_records_valid_and_whole():
    records = runner.simulate_log(SMALL)
    assert all(r.to_transition().is_valid() for r in records)
    by_session = {}
    for r in records:
        by_session.setdefault(r.session_id, []).append(r)
    assert len(by_session) == SMALL.n_sessions
    for rs in by_session.values():
        assert [r.step for r in rs] == list(range(len(rs)))
        assert rs[-1].done and not any(r.done for r in rs[:-1])
        assert all(b.timestamp == a.timestamp + 1 for a, b in zip(rs, rs[1:]))


def test_uniform_logging_frequencies():
    cfg = ExperimentConfig(n_sessions=10_000)
    records = runner.simulate_log(cfg)
    freq = np.bincount([r.action for r in records], minlength=8) / len(records)
    assert np.all(np.abs(freq - 1 / 8) < 0.01)


def test_dfm_scored_logging(tmp_path):
    data = runner.generate_dataset(SMALL, tmp_path / "data")
    ckpt, _ = runner.run_training(SMALL, "dfm", tmp_path / "dfm", log_path=data)
    cfg = SMALL.replace(logging_policy="dfm", logging_checkpoint=str(ckpt))
    records = runner.simulate_log(cfg)
    assert records and all(r.to_transition().is_valid() for r in records)
    assert records == runner.simulate_log(cfg)


# -- orchestration


def test_pool_never_steps_finished_sessions():
    pop = sim.PopulationParams.from_config(ExperimentConfig())
    seen = []

    def advance(session, action):
        assert session.alive
        seen.append(session.session_id)
        t, _ = sim.step(session, action)
        return t

    res = run_pool(
        pop, 0, lambda live: [Action(0)] * len(live), namespace=streams.DATASET_SESSIONS,
        pool_size=7, advance=advance, max_sessions=50,
    )
    assert len(res.finished) == 50 == res.opened
    assert sorted(s.session_id for s in res.finished) == list(range(50))
    assert sum(s.steps for s in res.finished) == len(seen)


def test_pool_tick_limit_and_workers_agree():
    pop = sim.PopulationParams.from_config(ExperimentConfig())
    outs = []
    for workers in (1, 5):
        ticks = []
        run_pool(
            pop, 4, lambda live: [Action(int(s.policy_rng.integers(8))) for s in live],
            namespace=streams.TRAIN_SESSIONS, pool_size=16, max_ticks=25, workers=workers,
            on_tick=lambda t, live, acts, outs_: ticks.append([(o.session_id, o.step, o.reward) for o in outs_]),
        )
        outs.append(ticks)
    assert len(outs[0]) == 25 and outs[0] == outs[1]


def test_pool_needs_a_limit():
    with pytest.raises(ValueError):
        run_pool(sim.PopulationParams(), 0, lambda live: [], namespace=1, pool_size=1)


# -- training and evaluation


def test_zero_steps_checkpoint_is_initialization(tmp_path):
    path, manifest = runner.run_training(SMALL, "sac", tmp_path, steps=0)
    init = runner.make_sac(SMALL)
    doc = load_checkpoint(path)
    for name, net in init.networks().items():
        assert all(np.array_equal(a, b) for a, b in zip(net.params(), doc["networks"][name].params()))
    assert manifest.end_step == 0 and doc["steps"] == 0


def test_zero_steps_sarsa_is_empty_table(tmp_path):
    path, _ = runner.run_training(SMALL, "sarsa", tmp_path, steps=0)
    assert load_checkpoint(path)["tables"]["q"]["entries"] == []


def test_offline_agents_need_a_log(tmp_path):
    for kind in ("dfm", "slateq"):
        with pytest.raises(runner.RunError):
            runner.run_training(SMALL, kind, tmp_path / kind)


@pytest.mark.parametrize("kind", runner.AGENTS)
def test_train_eval_every_agent(tmp_path, kind):
    data = runner.generate_dataset(SMALL, tmp_path / "data")
    ckpt, _ = runner.run_training(SMALL, kind, tmp_path / "run", log_path=data)
    rep = runner.run_eval(SMALL, ckpt, data, tmp_path / "eval")
    assert 0 <= rep.mrr <= 1 and 0 <= rep.conversion_rate <= 1
    assert rep.n_sessions == SMALL.eval_sessions and rep.config_digest == SMALL.digest()
    assert MetricsReport.from_json((tmp_path / "eval" / "metrics.json").read_text()) == rep
    again = runner.run_eval(SMALL, ckpt, data)
    assert again.to_json() == rep.to_json()


def test_checkpoint_config_mismatch(tmp_path):
    data = runner.generate_dataset(SMALL, tmp_path / "data")
    ckpt, _ = runner.run_training(SMALL, "random", tmp_path / "run")
    other = SMALL.replace(alpha=0.5)
    with pytest.raises(runner.ConfigMismatchError):
        runner.run_eval(other, ckpt, data)
    with pytest.raises(runner.ConfigMismatchError):
        runner.load_dataset(SMALL.replace(seed=9), data)


def test_oracle_agent_is_perfect_on_deterministic_clicks():
    cfg = ExperimentConfig(
        type_utility=(30.0,) + (-30.0,) * 7, segment_std=0.0, user_std=0.0, satiation_mean=0.0,
        satiation_std=0.0, null_utility=0.0, n_sessions=300, eval_sessions=20, split_timestamp=50,
    )
    records = runner.simulate_log(cfg)
    rep = runner.evaluate_agent(cfg, OracleAgent(runner.population(cfg), cfg.seed), "oracle", records)
    assert rep.n_relevant > 0 and rep.mrr_relevant == 1.0 and rep.hits_at_k_relevant[1] == 1.0


def test_random_agent_mrr_on_logged_clicks():
    cfg = ExperimentConfig(n_sessions=9000, eval_sessions=10, split_timestamp=0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = runner.evaluate_agent(cfg, RandomAgent(8, cfg.seed), "random", runner.simulate_log(cfg))
    assert rep.n_relevant >= 10_000
    assert abs(rep.mrr_relevant - sum(1 / r for r in range(1, 9)) / 8) < 0.01


@pytest.mark.slow
def test_sac_beats_uniform_random_return():
    sac, rnd = [], []
    for seed in range(5):
        cfg = ExperimentConfig(seed=seed, eval_sessions=300)
        sac.append(np.mean([sum(t.reward for t in s) for s in runner.online_sessions(cfg, runner.train_agent(cfg, "sac"))]))
        rnd.append(np.mean([sum(t.reward for t in s) for s in runner.online_sessions(cfg, RandomAgent(8, seed))]))
    assert np.mean(sac) > np.mean(rnd)


# -- comparison


def report(seed, mrr_=0.3, hits=None, digest="d"):
    return MetricsReport("x", mrr_, hits or {1: 0.1, 3: 0.2}, 0.2, 10, digest, seed)


def test_compare_identical_is_zero():
    rows = runner.compare([report(1), report(2)], [report(1), report(2)])
    assert all(r.mrr_delta == 0 and r.hits1_delta == 0 and r.conversion_delta == 0 for r in rows)


def test_compare_five_seeds_has_mean_row():
    a = [report(s, 0.3 + s / 100) for s in range(5)]
    b = [report(s, 0.25) for s in range(5)]
    rows = runner.compare(a, b)
    assert len(rows) == 6 and rows[-1].seed == "mean"
    assert rows[-1].mrr_delta == pytest.approx(0.07)
    text = runner.format_comparison(rows, "SAC", "DFM")
    assert len(text.strip().splitlines()) == 7


def test_compare_mismatches():
    with pytest.raises(runner.RunError):
        runner.compare([report(1)], [report(1, hits={1: 0.1})])
    with pytest.raises(runner.ConfigMismatchError):
        runner.compare([report(1)], [report(1, digest="e")])
    with pytest.raises(runner.RunError):
        runner.compare([report(1)], [report(2)])


# -- command line


def test_cli_round_trip(tmp_path, capsys):
    cfg_path = tmp_path / "exp.ini"
    save_config(SMALL, cfg_path)
    base = ["--config", str(cfg_path), "--seed", "5"]
    assert main(["generate", *base, "--out", str(tmp_path / "data")]) == 0
    log = str(tmp_path / "data" / "interactions.jsonl")
    for kind in ("dfm", "sac"):
        assert main(["train", *base, "--agent", kind, "--log", log, "--out", str(tmp_path / kind)]) == 0
        assert main(["eval", *base, "--checkpoint", str(tmp_path / kind / "checkpoint.json"), "--log", log, "--out", str(tmp_path / f"{kind}-eval")]) == 0
    capsys.readouterr()
    assert main(["compare", "--a", str(tmp_path / "sac-eval" / "metrics.json"), "--b", str(tmp_path / "dfm-eval" / "metrics.json")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].strip().startswith("mean")


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[agent]\nnope = 1\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "unknown key" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["train", "--agent", "ppo", "--out", str(tmp_path)])


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
