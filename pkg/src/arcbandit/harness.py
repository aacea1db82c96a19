"""Regret experiments: paired replications, quantile curves, CSV/JSON output.

Random streams are derived from ``base_seed`` with ``SeedSequence`` spawn
keys, one per (replication, stream kind[, policy]).  Within a replication
every policy faces the same ``theta`` and the same environment noise
sequence; only the policies' own draws differ.
"""

import hashlib
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .baselines import make_policy
from .envs import EnvironmentSpec
from .errors import ConfigError, InvalidArgument, NumericError

log = logging.getLogger(__name__)

STREAM_THETA, STREAM_NOISE, STREAM_POLICY = 0, 1, 2
STATISTICS = (("mean", None), ("median", 0.5), ("q75", 0.75), ("q90", 0.9))
FAILURE_LIMIT = 0.01


def stream(base_seed, replication, kind, policy=0):
    ss = np.random.SeedSequence(base_seed, spawn_key=(replication, kind, policy))
    return np.random.Generator(np.random.PCG64(ss))


def content_hash(obj):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    env: EnvironmentSpec
    policies: tuple
    labels: tuple
    horizon: int = 500
    replications: int = 200
    base_seed: int = 0
    output: Optional[str] = None
    checkpoint_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.horizon < 1 or self.replications < 1:
            raise ConfigError("horizon and replications must be >= 1")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("policy labels must be unique")
        if len(self.labels) != len(self.policies):
            raise ConfigError("one label per policy")
        if self.workers < 1 or self.checkpoint_every < 0:
            raise ConfigError("workers must be >= 1 and checkpoint_every >= 0")

    @classmethod
    def from_dict(cls, obj):
        try:
            env = EnvironmentSpec.from_dict(dict(obj["env"]))
            policies, labels = [], []
            for entry in obj.get("policies", []):
                labels.append(str(entry.get("label", entry.get("type"))))
                policies.append(make_policy(entry))
            return cls(env=env, policies=tuple(policies), labels=tuple(labels),
                       horizon=int(obj.get("horizon", 500)),
                       replications=int(obj.get("replications", 200)),
                       base_seed=int(obj.get("seed", 0)),
                       output=obj.get("output"),
                       checkpoint_every=int(obj.get("checkpoint_every", 0)),
                       workers=int(obj.get("workers", 1)))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    def to_dict(self):
        out = {
            "env": self.env.to_dict(),
            "policies": [dict(label=lab, **pol.to_dict())
                         for lab, pol in zip(self.labels, self.policies)],
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.base_seed,
        }
        if self.output is not None:
            out["output"] = self.output
        if self.checkpoint_every:
            out["checkpoint_every"] = self.checkpoint_every
        return out

    def identity(self):
        """The parts of the config that determine results (no output location)."""
        out = self.to_dict()
        out.pop("output", None)
        out.pop("checkpoint_every", None)
        return out

    def replace(self, **changes):
        fields = dict(env=self.env, policies=self.policies, labels=self.labels,
                      horizon=self.horizon, replications=self.replications,
                      base_seed=self.base_seed, output=self.output,
                      checkpoint_every=self.checkpoint_every, workers=self.workers)
        fields.update(changes)
        return ExperimentConfig(**fields)


def load_config(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    try:
        return ExperimentConfig.from_dict(obj)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------

@dataclass
class RegretTrace:
    label: str
    replication: int
    theta_hash: str
    cumulative: np.ndarray
    arm_counts: np.ndarray
    initial_d_norm: float
    final_d_norm: float
    error: Optional[str] = None

    @property
    def failed(self):
        return self.error is not None


def theta_digest(theta):
    return hashlib.sha256(np.ascontiguousarray(theta, dtype=np.float64).tobytes()).hexdigest()[:16]


def run_episode(env, policy, theta, horizon, noise_rng, policy_rng, label="", replication=0):
    """Play ``horizon`` steps; returns a :class:`RegretTrace`.

    Numeric failures abort the episode and are reported in ``error``.
    """
    arms = env.arms
    belief = env.initial_belief()
    means = env.conditional_means(theta)
    best = means.max()
    cumulative = np.full(horizon, np.nan)
    counts = np.zeros(env.n_arms, dtype=np.int64)
    d0 = belief.norm()
    total = 0.0
    try:
        for t in range(1, horizon + 1):
            arm = policy.select(belief, arms, t, horizon, policy_rng, env_means=means)
            obs = env.observe(theta, arm, noise=env.noise_block(noise_rng))
            belief = env.update(belief, obs)
            if not (np.all(np.isfinite(belief.m)) and np.all(np.isfinite(belief.d))):
                raise NumericError("posterior became non-finite")
            total += best - means[arm]
            cumulative[t - 1] = total
            counts[arm] += 1
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("replication %d, policy %s aborted at t=%d: %s", replication, label, t, exc)
        return RegretTrace(label, replication, theta_digest(theta), cumulative, counts, d0,
                           belief.norm(), error=f"{type(exc).__name__}: {exc}")
    return RegretTrace(label, replication, theta_digest(theta), cumulative, counts, d0,
                       belief.norm())


def run_replication(config, replication):
    """Every policy against one shared ``theta`` and noise sequence."""
    env = config.env
    theta = env.sample_theta(stream(config.base_seed, replication, STREAM_THETA))
    traces = []
    for j, (label, policy) in enumerate(zip(config.labels, config.policies)):
        traces.append(run_episode(
            env, policy, theta, config.horizon,
            noise_rng=stream(config.base_seed, replication, STREAM_NOISE),
            policy_rng=stream(config.base_seed, replication, STREAM_POLICY, j),
            label=label, replication=replication))
    return replication, theta, traces


def _replication_worker(args):
    config_dict, replication = args
    return run_replication(ExperimentConfig.from_dict(config_dict), replication)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

@dataclass
class Summary:
    labels: tuple
    horizon: int
    curves: dict
    final_regret: np.ndarray
    thetas: np.ndarray
    failures: dict
    arm_counts: np.ndarray = field(repr=False, default=None)
    final_d_norm: np.ndarray = field(repr=False, default=None)
    initial_d_norm: np.ndarray = field(repr=False, default=None)

    def mean_final_regret(self):
        """Mean final regret per label over successful replications (None if none)."""
        out = {}
        for j, label in enumerate(self.labels):
            col = self.final_regret[:, j]
            col = col[~np.isnan(col)]
            out[label] = float(col.mean()) if col.size else None
        return out

    @property
    def failure_rate(self):
        n = self.final_regret.shape[0] * max(len(self.labels), 1)
        return sum(self.failures.values()) / n if n else 0.0


def summarise(labels, horizon, results):
    """Aggregate ``{replication: (theta, traces)}`` in replication order."""
    order = sorted(results)
    n_rep, n_pol = len(order), len(labels)
    paths = np.full((n_rep, n_pol, horizon), np.nan)
    counts, d_end, d_start = [], np.full((n_rep, n_pol), np.nan), np.full((n_rep, n_pol), np.nan)
    failures = {lab: 0 for lab in labels}
    thetas = []
    for r, rep in enumerate(order):
        theta, traces = results[rep]
        thetas.append(theta)
        counts.append([tr.arm_counts for tr in traces])
        for j, tr in enumerate(traces):
            d_end[r, j], d_start[r, j] = tr.final_d_norm, tr.initial_d_norm
            if tr.failed:
                failures[tr.label] += 1
            else:
                paths[r, j] = tr.cumulative
    curves = {}
    with warnings.catch_warnings():
        # a policy whose every replication failed yields all-NaN columns
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, q in STATISTICS:
            if n_pol == 0:
                curves[name] = np.zeros((horizon, 0))
            elif q is None:
                curves[name] = np.nanmean(paths, axis=0).T
            else:
                curves[name] = np.nanquantile(paths, q, axis=0).T
    return Summary(labels=tuple(labels), horizon=horizon, curves=curves,
                   final_regret=paths[:, :, -1] if horizon else np.zeros((n_rep, n_pol)),
                   thetas=np.array(thetas), failures=failures,
                   arm_counts=np.array(counts) if n_pol else np.zeros((n_rep, 0, 0)),
                   final_d_norm=d_end, initial_d_norm=d_start)


def _checkpoint_path(config):
    return os.path.join(config.output, "checkpoint.json") if config.output else None


def _load_checkpoint(path, digest):
    if not path or not os.path.exists(path):
        return {}
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("config_hash") != digest:
        log.warning("checkpoint %s belongs to another config; ignoring it", path)
        return {}
    done = {}
    for key, rec in obj["replications"].items():
        traces = [RegretTrace(t["label"], int(key), t["theta_hash"],
                              np.array(t["cumulative"], dtype=np.float64),
                              np.array(t["arm_counts"], dtype=np.int64),
                              t["initial_d_norm"], t["final_d_norm"], t.get("error"))
                  for t in rec["traces"]]
        done[int(key)] = (np.array(rec["theta"], dtype=np.float64), traces)
    return done


def _write_checkpoint(path, digest, results):
    reps = {}
    for rep, (theta, traces) in results.items():
        reps[str(rep)] = {"theta": theta.tolist(), "traces": [
            {"label": t.label, "theta_hash": t.theta_hash,
             "cumulative": [None if math.isnan(x) else x for x in t.cumulative.tolist()],
             "arm_counts": t.arm_counts.tolist(), "initial_d_norm": t.initial_d_norm,
             "final_d_norm": t.final_d_norm, "error": t.error} for t in traces]}
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump({"config_hash": digest, "replications": reps}, fh)
    os.replace(tmp, path)


def run_experiment(config, workers=None, progress=None):
    """Run every replication and return a :class:`Summary`.

    With ``workers > 1`` replications run in a process pool; results are
    merged by replication index so completion order does not matter.  When
    ``config.checkpoint_every`` is set and ``config.output`` names a
    directory, finished replications are saved and skipped on a rerun.
    """
    workers = workers or config.workers
    digest = content_hash(config.identity())
    ck_path = _checkpoint_path(config) if config.checkpoint_every else None
    if ck_path:
        os.makedirs(config.output, exist_ok=True)
    results = _load_checkpoint(ck_path, digest)
    todo = [r for r in range(config.replications) if r not in results]

    def record(rep, theta, traces):
        results[rep] = (theta, traces)
        if progress is not None:
            progress(len(results), config.replications)
        if ck_path and len(results) % config.checkpoint_every == 0:
            _write_checkpoint(ck_path, digest, results)

    if workers > 1 and len(todo) > 1:
        cfg = config.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, theta, traces in pool.map(_replication_worker,
                                               [(cfg, r) for r in todo], chunksize=1):
                record(rep, theta, traces)
    else:
        for r in todo:
            record(*run_replication(config, r))
    if ck_path:
        _write_checkpoint(ck_path, digest, results)
    return summarise(config.labels, config.horizon, results)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(x):
    return "nan" if math.isnan(x) else format(x, ".17g")


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def emit_plot_data(summary, path):
    """Write ``mean.csv``, ``median.csv``, ``q75.csv`` and ``q90.csv``.

    Columns are ``t`` then one per policy in config order; one row per step.
    """
    os.makedirs(path, exist_ok=True)
    written = []
    header = ["t", *summary.labels]
    for name, _ in STATISTICS:
        curve = summary.curves[name]
        rows = ([str(t + 1), *(_fmt(v) for v in curve[t])] for t in range(curve.shape[0])) \
            if summary.labels else []
        out = os.path.join(path, f"{name}.csv")
        _write_table(out, header, rows)
        written.append(out)
    return written


def read_plot_csv(path):
    """Parse one statistic file back into ``(labels, t, values)``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    t = np.array([int(r[0]) for r in data], dtype=np.int64)
    values = np.array([[float(x) for x in r[1:]] for r in data]).reshape(len(data), len(header) - 1)
    return tuple(header[1:]), t, values


def write_outputs(config, summary, path, wall_clock=None):
    """Curves, per-replication tables and a manifest with file digests."""
    files = emit_plot_data(summary, path)
    final = os.path.join(path, "final_regret.csv")
    _write_table(final, ["replication", *summary.labels],
                 ([str(r), *(_fmt(v) for v in row)] for r, row in enumerate(summary.final_regret)))
    thetas = os.path.join(path, "thetas.csv")
    p = summary.thetas.shape[1] if summary.thetas.ndim == 2 else 0
    _write_table(thetas, ["replication", *(f"theta_{j}" for j in range(p))],
                 ([str(r), *(_fmt(v) for v in row)] for r, row in enumerate(summary.thetas)))
    files += [final, thetas]
    digests = {}
    for f in files:
        with open(f, "rb") as fh:
            digests[os.path.basename(f)] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "config": config.identity(),
        "config_hash": content_hash(config.identity()),
        "backend": _backend.BACKEND,
        "failures": summary.failures,
        "failure_rate": summary.failure_rate,
        "files": digests,
    }
    if wall_clock is not None:
        manifest["timing"] = {"wall_clock_seconds": wall_clock}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def simulate(config, path=None, workers=None, progress=None):
    """Run an experiment and write its outputs to ``path`` (if given)."""
    start = time.perf_counter()
    summary = run_experiment(config, workers=workers, progress=progress)
    elapsed = time.perf_counter() - start
    manifest = None
    if path:
        manifest = write_outputs(config, summary, path, wall_clock=elapsed)
    return summary, manifest
