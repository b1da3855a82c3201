"""Experiment orchestration: seeded episodes, metrics, summaries.

Runs the planner-in-the-loop evaluation (controlled agent plans through the
causal pipeline, partner follows a scripted policy), counts proposal-level
and execution-level invalid actions separately, and aggregates per-seed
reports into reproducible summaries.  Also hosts the synthetic
structure-recovery study.  No output file contains wall-clock information,
so identical configurations reproduce byte-identical artifacts.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .buffer import META_PREFIX
from .features import FeatureSchema, encode_action, encode_state
from .kitchen import ACTIONS, KitchenLayout, load_layout, reset, step
from .matrix import CausalActionMatrix, import_matrix
from .planner import PlannerConfig, ProposalSet, plan
from .policies import PolicySpec, policy_act
from .proposers import (
    EndpointConfig,
    HallucinationProfile,
    ProposalLog,
    RemoteProposer,
    replay_propose,
    scripted_propose,
)
from .ridge import (
    dataset_to_buffer,
    edge_agreement,
    generate_synthetic,
    recover_structure,
    ridge_fit,
    structural_metrics,
)
from .sca import TrainConfig, gate_graph, train


class ConfigError(ValueError):
    """Raised for invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    layout_path: str
    schema_path: str
    matrix_path: str | None = None
    proposer: dict = field(default_factory=lambda: {"kind": "scripted"})
    partner_policy: str = "greedy_chef"
    partner_epsilon: float = 0.0
    gamma: float = 0.5
    seeds: tuple[int, ...] = (0, 1, 2)
    horizon: int = 400
    out_dir: str = "runs/latest"
    controlled_seat: int = 1
    workers: int = 1

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.matrix_path is None and self.gamma < 1.0:
            raise ConfigError("a causal matrix is required whenever gamma < 1")
        if self.controlled_seat not in (0, 1):
            raise ConfigError(f"controlled_seat must be 0 or 1, got {self.controlled_seat}")
        self.seeds = tuple(int(s) for s in self.seeds)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def to_dict(self) -> dict:
        return {
            "layout_path": self.layout_path,
            "schema_path": self.schema_path,
            "matrix_path": self.matrix_path,
            "proposer": self.proposer,
            "partner_policy": self.partner_policy,
            "partner_epsilon": self.partner_epsilon,
            "gamma": self.gamma,
            "seeds": list(self.seeds),
            "horizon": self.horizon,
            "out_dir": self.out_dir,
            "controlled_seat": self.controlled_seat,
            "workers": self.workers,
        }


@dataclass
class EpisodeReport:
    seed: int
    total_reward: int
    deliveries: int
    invalid_proposals: int
    invalid_executions: int
    backup_invocations: int
    log_path: str

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "total_reward": self.total_reward,
            "deliveries": self.deliveries,
            "invalid_proposals": self.invalid_proposals,
            "invalid_executions": self.invalid_executions,
            "backup_invocations": self.backup_invocations,
            "log_path": self.log_path,
        }


@dataclass
class RunSummary:
    reports: list[EpisodeReport]
    config: dict
    version: str = __version__

    def _stats(self, attr: str) -> dict:
        values = np.asarray([getattr(r, attr) for r in self.reports], dtype=float)
        return {"mean": float(values.mean()), "std": float(values.std())}

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "reports": [r.to_dict() for r in self.reports],
            "reward": self._stats("total_reward"),
            "deliveries": self._stats("deliveries"),
            "invalid_proposals": self._stats("invalid_proposals"),
            "invalid_executions": self._stats("invalid_executions"),
            "backup_invocations": self._stats("backup_invocations"),
        }

    def table(self) -> str:
        lines = [
            f"{'seed':>6}  {'reward':>7}  {'deliveries':>10}  "
            f"{'bad_proposals':>13}  {'bad_executions':>14}  {'backups':>7}"
        ]
        for r in self.reports:
            lines.append(
                f"{r.seed:>6}  {r.total_reward:>7}  {r.deliveries:>10}  "
                f"{r.invalid_proposals:>13}  {r.invalid_executions:>14}  {r.backup_invocations:>7}"
            )
        doc = self.to_dict()
        lines.append(
            f"{'mean':>6}  {doc['reward']['mean']:>7.1f}  {doc['deliveries']['mean']:>10.1f}  "
            f"{doc['invalid_proposals']['mean']:>13.1f}  {doc['invalid_executions']['mean']:>14.1f}  "
            f"{doc['backup_invocations']['mean']:>7.1f}"
        )
        lines.append(
            f"{'std':>6}  {doc['reward']['std']:>7.1f}  {doc['deliveries']['std']:>10.1f}  "
            f"{doc['invalid_proposals']['std']:>13.1f}  {doc['invalid_executions']['std']:>14.1f}  "
            f"{doc['backup_invocations']['std']:>7.1f}"
        )
        return "\n".join(lines) + "\n"


def describe_scenario(state_bits: np.ndarray, schema: FeatureSchema) -> str:
    """Grounded natural-language observation for the remote proposer."""
    active = [schema.state_features[i] for i in np.flatnonzero(np.asarray(state_bits))]
    hand_text = {
        "empty_hand": "nothing",
        "hold_onion": "an onion",
        "hold_dish": "an empty dish",
        "dish_with_soup": "a dish filled with soup",
    }
    parts = []
    for suffix, who in (("1", "You hold"), ("2", "The other cook holds")):
        for key, text in hand_text.items():
            if f"{key}{suffix}" in active:
                parts.append(f"{who} {text}.")
    for name in active:
        if name.startswith("pot_finished"):
            parts.append("A pot has finished cooking and the soup is ready.")
        elif name.startswith("pot") and not name.startswith("pot_finished"):
            count = name[3]
            parts.append(f"A pot contains {count} onion(s)." if count != "3" else "A pot is cooking.")
    if "goal_delivered" in active:
        parts.append("At least one soup has been delivered.")
    return " ".join(parts)


@dataclass
class _Artifacts:
    layout: KitchenLayout
    schema: FeatureSchema
    matrix: CausalActionMatrix


def _load_artifacts(config: ExperimentConfig) -> _Artifacts:
    layout = load_layout(config.layout_path)
    schema = FeatureSchema.load(config.schema_path)
    if layout.num_pots != schema.num_pots:
        raise ConfigError(
            f"layout has {layout.num_pots} pot(s) but schema expects {schema.num_pots}"
        )
    if config.matrix_path is not None:
        matrix = import_matrix(config.matrix_path, schema)
    else:
        # gamma == 1 and no matrix: a cold all-zero matrix only affects the
        # (flagged) backup path
        matrix = CausalActionMatrix(
            entries=np.zeros((schema.action_dim, schema.parent_dim)), schema=schema
        )
    return _Artifacts(layout=layout, schema=schema, matrix=matrix)


def _make_proposer(config: ExperimentConfig, schema: FeatureSchema, rng: np.random.Generator):
    """Returns propose(t, state_bits, prev_bits) -> ProposalSet."""
    doc = dict(config.proposer)
    kind = doc.pop("kind", "scripted")
    if kind == "scripted":
        profile = HallucinationProfile(**doc)

        def _scripted(t: int, state_bits, prev_bits) -> ProposalSet:
            del t
            return scripted_propose(state_bits, prev_bits, profile, schema, rng)

        return _scripted
    if kind == "replay":
        log = ProposalLog.load(doc["log_path"])

        def _replay(t: int, state_bits, prev_bits) -> ProposalSet:
            del state_bits, prev_bits
            return replay_propose(log, t)

        return _replay
    if kind == "remote":
        endpoint = EndpointConfig(**doc)
        remote = RemoteProposer(endpoint)

        def _remote(t: int, state_bits, prev_bits) -> ProposalSet:
            del t
            observation = describe_scenario(state_bits, schema)
            return remote.propose(observation, state_bits, prev_bits)

        return _remote
    raise ConfigError(f"unknown proposer kind {kind!r}")


def run_episode(config: ExperimentConfig, seed: int, artifacts: _Artifacts | None = None) -> EpisodeReport:
    """Play one seeded episode and write its JSONL decision log."""
    if artifacts is None:
        artifacts = _load_artifacts(config)
    layout, schema, matrix = artifacts.layout, artifacts.schema, artifacts.matrix
    streams = np.random.SeedSequence(seed).spawn(3)
    proposer_rng = np.random.default_rng(streams[0])
    planner_rng = np.random.default_rng(streams[1])
    partner_rng = np.random.default_rng(streams[2])

    propose = _make_proposer(config, schema, proposer_rng)
    planner_config = PlannerConfig(gamma=config.gamma, seed=seed)
    partner_spec = PolicySpec(kind=config.partner_policy, epsilon=config.partner_epsilon)
    me = config.controlled_seat
    partner = 1 - me

    os.makedirs(config.out_dir, exist_ok=True)
    log_path = os.path.join(config.out_dir, f"episode_seed{seed}.jsonl")

    state = reset(layout)
    prev_executed = None
    total_reward = 0
    invalid_proposals = 0
    invalid_executions = 0
    backups = 0

    with open(log_path, "w", encoding="utf-8") as log:
        header = {
            "controlled_seat": me,
            "gamma": config.gamma,
            "horizon": config.horizon,
            "layout": layout.name,
            "seed": seed,
            "version": __version__,
        }
        log.write(META_PREFIX + json.dumps(header, sort_keys=True) + "\n")
        for t in range(1, config.horizon + 1):
            state_bits = encode_state(state, schema, perspective=me)
            prev_bits = encode_action(prev_executed, schema)
            proposal_set = propose(t, state_bits, prev_bits)
            decision = plan(proposal_set, matrix, planner_config, planner_rng)
            partner_action = policy_act(partner_spec, state, partner, layout, partner_rng)
            joint = [None, None]
            joint[me] = decision.chosen
            joint[partner] = partner_action
            outcome = step(state, (joint[0], joint[1]), layout)

            invalid_proposals += proposal_set.unrecognized_count()
            if decision.path == "backup":
                backups += 1
            if outcome.invalid[me]:
                invalid_executions += 1
            if outcome.executed[me]:
                prev_executed = decision.chosen
            total_reward += outcome.reward

            entry = {
                "t": t,
                "state": [int(b) for b in state_bits],
                "prev_action": [int(b) for b in prev_bits],
                "proposals": [
                    {
                        "raw": p.raw_text,
                        "canonical": p.canonical.value if p.canonical else None,
                        "p_a": p.p_a,
                    }
                    for p in proposal_set.proposals
                ],
                "transport_failure": proposal_set.transport_failure,
                "decision": decision.to_dict(),
                "partner_action": partner_action.value if partner_action else None,
                "executed": list(outcome.executed),
                "invalid": list(outcome.invalid),
                "reward": outcome.reward,
                "deliveries": outcome.next_state.deliveries,
            }
            log.write(json.dumps(entry, separators=(",", ":")) + "\n")
            state = outcome.next_state

    return EpisodeReport(
        seed=seed,
        total_reward=total_reward,
        deliveries=state.deliveries,
        invalid_proposals=invalid_proposals,
        invalid_executions=invalid_executions,
        backup_invocations=backups,
        log_path=log_path,
    )


def _episode_worker(config_doc: dict, seed: int) -> EpisodeReport:
    return run_episode(ExperimentConfig.from_dict(config_doc), seed)


def evaluate(config: ExperimentConfig) -> RunSummary:
    """Run every seed, aggregate, and write summary artifacts.

    A failing episode aborts the run but the reports gathered so far are
    still written to a partial summary.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "config.json"), "w", encoding="utf-8") as handle:
        json.dump(config.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")

    reports: list[EpisodeReport] = []
    try:
        if config.workers > 1:
            doc = config.to_dict()
            with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(_episode_worker, doc, seed) for seed in config.seeds]
                by_seed = {f.result().seed: f.result() for f in futures}
            reports = [by_seed[seed] for seed in config.seeds]
        else:
            artifacts = _load_artifacts(config)
            for seed in config.seeds:
                reports.append(run_episode(config, seed, artifacts))
    except Exception:
        if reports:
            partial = RunSummary(reports=reports, config=config.to_dict())
            _write_summary(partial, config.out_dir, name="summary_partial")
        raise

    summary = RunSummary(reports=reports, config=config.to_dict())
    _write_summary(summary, config.out_dir)
    return summary


def _write_summary(summary: RunSummary, out_dir: str, name: str = "summary") -> None:
    with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as handle:
        json.dump(summary.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    with open(os.path.join(out_dir, f"{name}.txt"), "w", encoding="utf-8") as handle:
        handle.write(summary.table())


def count_invalid(log_path: str) -> dict:
    """Recount invalid proposals and invalid executions from an episode log."""
    invalid_proposals = 0
    invalid_executions = 0
    seat = None
    with open(log_path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(META_PREFIX):
                seat = json.loads(line[len(META_PREFIX):])["controlled_seat"]
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{log_path}:{lineno}: malformed log line: {exc}") from exc
            if seat is None:
                raise ValueError(f"{log_path}: missing meta header before records")
            invalid_proposals += sum(1 for p in entry["proposals"] if p["canonical"] is None)
            if entry["invalid"][seat]:
                invalid_executions += 1
    return {"invalid_proposals": invalid_proposals, "invalid_executions": invalid_executions}


@dataclass
class OracleStudyConfig:
    """Synthetic recovery study: gate-threshold graphs vs ridge-threshold graphs."""

    parent_dim: int = 10
    child_dim: int = 4
    density: float = 0.3
    samples: int = 5000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    noise_scale: float = 0.3
    ridge_lambda: float = 1e-2
    ridge_threshold: float = 0.1
    gate_threshold: float = 0.5
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            lr=1e-3,
            lambda_reg=1e-3,
            iterations=4000,
            batch_size=256,
            hidden_sizes=(32, 64, 64, 32),
            weight_decay=1e-2,
        )
    )

    @classmethod
    def from_dict(cls, doc: dict) -> "OracleStudyConfig":
        doc = dict(doc)
        train_doc = doc.pop("train", None)
        config = cls(**doc)
        if train_doc is not None:
            config = replace(config, train=TrainConfig(**train_doc))
        return config


def run_oracle_study(config: OracleStudyConfig, out_dir: str | None = None) -> dict:
    """Per-seed recovery metrics for both routes plus their mutual agreement."""
    allowed_total = config.parent_dim * config.child_dim - config.child_dim
    per_seed = []
    for seed in config.seeds:
        x, y, scm = generate_synthetic(
            config.parent_dim,
            config.child_dim,
            config.density,
            config.samples,
            seed=seed,
            noise_scale=config.noise_scale,
        )
        fit = ridge_fit(x, y, lam=config.ridge_lambda, feature_map="pairwise")
        ridge_edges = recover_structure(fit, threshold=config.ridge_threshold)

        buffer = dataset_to_buffer(x, y, config.child_dim)
        train_config = replace(config.train, seed=seed)
        model = train(buffer, train_config)
        gate_edges = gate_graph(model, threshold=config.gate_threshold)

        per_seed.append(
            {
                "seed": seed,
                "true_edges": int(scm.true_edges.sum()),
                "ridge": structural_metrics(ridge_edges, scm.true_edges),
                "gates": structural_metrics(gate_edges, scm.true_edges),
                "agreement": edge_agreement(ridge_edges, gate_edges),
            }
        )
    summary = {
        "config": {
            "parent_dim": config.parent_dim,
            "child_dim": config.child_dim,
            "density": config.density,
            "samples": config.samples,
            "seeds": list(config.seeds),
            "noise_scale": config.noise_scale,
            "ridge_lambda": config.ridge_lambda,
            "ridge_threshold": config.ridge_threshold,
            "gate_threshold": config.gate_threshold,
            "train": config.train.to_dict(),
        },
        "allowed_positions": allowed_total,
        "per_seed": per_seed,
        "mean_ridge_f1": float(np.mean([s["ridge"]["f1"] for s in per_seed])),
        "mean_gate_f1": float(np.mean([s["gates"]["f1"] for s in per_seed])),
        "mean_agreement": float(np.mean([s["agreement"] for s in per_seed])),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "oracle_summary.json"), "w", encoding="utf-8") as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write("\n")
    return summary
