"""Command-line entry point: ``dhrec <verb> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from dhrec.checkpoint import CheckpointError
from dhrec.core.config import ConfigError, ExperimentConfig, load_config, save_config
from dhrec.evaluation import MetricsReport
from dhrec.harness import oracles, runner
from dhrec.harness.logio import LogFormatError


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI experiment config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, default=1, help="threads used to step sessions")


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    path = runner.generate_dataset(cfg, out, args.workers)
    save_config(cfg, out / "config.ini")
    print(f"wrote {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    path, manifest = runner.run_training(cfg, args.agent, args.out, args.steps, args.log, args.workers)
    print(f"wrote {path} ({manifest.end_step} steps, digest {manifest.config_digest})")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    report = runner.run_eval(cfg, args.checkpoint, args.log, args.out, args.workers)
    sys.stdout.write(report.to_json())
    return 0


def cmd_compare(args) -> int:
    a = [MetricsReport.from_json(Path(p).read_text()) for p in args.a]
    b = [MetricsReport.from_json(Path(p).read_text()) for p in args.b]
    text = runner.format_comparison(runner.compare(a, b), args.name_a, args.name_b)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    from dhrec.gradcheck import TOLERANCE, run_gradcheck

    start = time.perf_counter()
    ok = True
    for seed in range(args.seed or 0, (args.seed or 0) + args.seeds):
        r = run_gradcheck(seed)
        ok &= r.passed
        print(f"seed {seed:3d}  critic {r.critic:.2e}  policy {r.policy:.2e}  dfm {r.dfm:.2e}  {'ok' if r.passed else 'FAIL'}")
    print(f"tolerance {TOLERANCE:.0e}; {time.perf_counter() - start:.1f}s; {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_oracle(args) -> int:
    seed = args.seed or 0
    ok = True
    s = oracles.sarsa_oracle(seed)
    good = s.max_error < 1e-3 and s.policy_match
    ok &= good
    print(f"sarsa chain ({s.n_states} states): max |Q - Q*| = {s.max_error:.2e}, greedy policy match = {s.policy_match}  {'ok' if good else 'FAIL'}")
    for r in oracles.slate_decomposition_oracle(seed, args.rollouts):
        good = r.error < 1e-2
        ok &= good
        print(
            f"slate {'+'.join(r.slate)}: decomposed {r.decomposed:.4f}  monte carlo {r.monte_carlo:.4f}"
            f" (se {r.std_error:.4f})  {'ok' if good else 'FAIL'}"
        )
    agree, n = oracles.selection_oracle(seed)
    ok &= agree == n
    print(f"exhaustive slate selection vs brute force: {agree}/{n}  {'ok' if agree == n else 'FAIL'}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dhrec", description="interactive recommendation experiments on a simulated live room")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="simulate logged sessions under the logging policy")
    _common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an agent and write a checkpoint")
    _common(p)
    p.add_argument("--agent", choices=runner.AGENTS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, help="pool ticks (epochs for dfm)")
    p.add_argument("--log", help="interaction log; required for dfm and slateq")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the validation split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="side-by-side table of two sets of reports")
    p.add_argument("--a", nargs="+", required=True, help="reports of agent A, one per seed")
    p.add_argument("--b", nargs="+", required=True, help="reports of agent B, one per seed")
    p.add_argument("--name-a", default="A")
    p.add_argument("--name-b", default="B")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all training gradients")
    p.add_argument("--seed", type=int, help="first seed (default 0)")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle", help="enumerable-MDP checks for SARSA and SlateQ")
    p.add_argument("--seed", type=int)
    p.add_argument("--rollouts", type=int, default=100_000)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, LogFormatError, runner.RunError, OSError) as exc:
        print(f"dhrec: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
