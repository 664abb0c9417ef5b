"""Offline-dataset recording, persistence and summary statistics.

A dataset is a flat table of transitions (observation, action, reward,
terminal, timeout) tagged by episode and step, plus a metadata header.  On
disk it is a directory holding ``meta.json`` and ``data.csv``; numbers are
written with 17 significant digits, which round-trips IEEE doubles exactly,
so write -> read -> write reproduces identical bytes.

A failed step stores the error reward as that step's reward with
terminal=1, so failure episodes are recognizable as terminal rows carrying
exactly the error reward.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    CorruptRowError,
    DimMismatchError,
    EmptyDatasetError,
    FormatVersionMismatchError,
    InvalidEpisodeError,
)

FORMAT_VERSION = "1"


@dataclass
class DatasetMeta:
    env: str
    baseline: str
    traj_count: int
    a_dim: int
    o_dim: int
    max_steps: int
    error_reward: float
    reward_mean: float
    reward_std: float
    seed: int
    format_version: str = FORMAT_VERSION
    # per-step convention: the mean/std are over individual step rewards,
    # not episode returns
    reward_convention: str = "per_step"
    # whether error_reward <= r_min * max_steps was verified at generation
    inequality_checked: bool = False


@dataclass
class Dataset:
    meta: DatasetMeta
    episode_ids: np.ndarray
    steps: np.ndarray
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    timeouts: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.rewards.size


@dataclass
class TrajectoryRecord:
    """One episode's ordered transitions.

    At most one closing (terminal or timeout) row, and it is the last one;
    the length never exceeds the episode cap.
    """

    episode_id: int
    transitions: list[tuple] = None  # (obs, action, reward, terminal, timeout)

    def __post_init__(self):
        if self.transitions is None:
            self.transitions = []

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def closed(self) -> bool:
        return bool(self.transitions) and (
            self.transitions[-1][3] or self.transitions[-1][4]
        )

    def append(self, observation, action, reward, terminal, timeout) -> None:
        if self.closed:
            raise InvalidEpisodeError(
                "episode closed by a terminal/timeout row; begin a new one"
            )
        self.transitions.append(
            (observation, action, float(reward), bool(terminal), bool(timeout))
        )


class DatasetRecorder:
    """Row-at-a-time sink enforcing episode structure.

    Episodes open with ``begin_episode`` and close themselves on the first
    terminal or timeout row; recording past a closed episode (or past
    ``max_steps``) raises.
    """

    def __init__(self, env_name, baseline, a_dim, o_dim, max_steps,
                 error_reward, seed):
        self.env_name = env_name
        self.baseline = baseline
        self.a_dim = int(a_dim)
        self.o_dim = int(o_dim)
        self.max_steps = int(max_steps)
        self.error_reward = float(error_reward)
        self.seed = int(seed)
        self._episodes: list[TrajectoryRecord] = []
        self._current: TrajectoryRecord | None = None

    def begin_episode(self) -> int:
        if self._current is not None and not self._current.closed:
            raise InvalidEpisodeError("previous episode is still open")
        self._current = TrajectoryRecord(episode_id=len(self._episodes))
        self._episodes.append(self._current)
        return self._current.episode_id

    def record(self, observation, action, reward, terminal, timeout) -> None:
        if self._current is None:
            raise InvalidEpisodeError("begin_episode() before recording")
        observation = np.asarray(observation, float)
        action = np.asarray(action, float)
        if observation.shape != (self.o_dim,):
            raise DimMismatchError(
                f"observation dim {observation.shape} != ({self.o_dim},)"
            )
        if action.shape != (self.a_dim,):
            raise DimMismatchError(f"action dim {action.shape} != ({self.a_dim},)")
        if len(self._current) >= self.max_steps:
            raise InvalidEpisodeError("episode exceeded max_steps")
        self._current.append(
            observation.copy(), action.copy(), reward, terminal, timeout
        )

    def finish(self) -> Dataset:
        if self._current is not None and not self._current.closed:
            raise InvalidEpisodeError("cannot finish with an open episode")
        n = sum(len(ep) for ep in self._episodes)
        obs = np.zeros((n, self.o_dim))
        act = np.zeros((n, self.a_dim))
        episode_ids = np.zeros(n, dtype=np.int64)
        steps = np.zeros(n, dtype=np.int64)
        rewards = np.zeros(n)
        terminals = np.zeros(n, dtype=bool)
        timeouts = np.zeros(n, dtype=bool)
        i = 0
        for ep in self._episodes:
            for st, (o, a, r, term, tout) in enumerate(ep.transitions):
                episode_ids[i] = ep.episode_id
                steps[i] = st
                obs[i] = o
                act[i] = a
                rewards[i] = r
                terminals[i] = term
                timeouts[i] = tout
                i += 1
        mean, std, _ = _stats_arrays(rewards) if n else (0.0, 0.0, 0.0)
        meta = DatasetMeta(
            env=self.env_name,
            baseline=self.baseline,
            traj_count=len(self._episodes),
            a_dim=self.a_dim,
            o_dim=self.o_dim,
            max_steps=self.max_steps,
            error_reward=self.error_reward,
            reward_mean=float(mean),
            reward_std=float(std),
            seed=self.seed,
        )
        return Dataset(meta, episode_ids, steps, obs, act, rewards, terminals, timeouts)


def _stats_arrays(rewards: np.ndarray):
    mean = float(np.mean(rewards))
    std = float(np.sqrt(np.mean((rewards - mean) ** 2)))  # population std
    return mean, std, None


def stats(ds: Dataset) -> tuple[float, float, float]:
    """Per-step reward mean, population std, and episode success rate.

    An episode failed when its closing row is terminal with exactly the
    error reward; everything else (timeouts, successful completions)
    counts as success.
    """
    if ds.n_rows == 0:
        raise EmptyDatasetError("dataset has no rows")
    mean, std, _ = _stats_arrays(ds.rewards)
    closing = ds.terminals | ds.timeouts
    failures = np.sum(
        ds.terminals[closing] & (ds.rewards[closing] == ds.meta.error_reward)
    )
    episodes = int(np.sum(closing))
    success_rate = 1.0 - failures / episodes if episodes else 1.0
    return mean, std, float(success_rate)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(ds: Dataset, path: str) -> None:
    """Persist as ``meta.json`` + ``data.csv`` under directory ``path``."""
    os.makedirs(path, exist_ok=True)
    meta = dict(sorted(asdict(ds.meta).items()))
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    header = (
        ["episode_id", "step"]
        + [f"obs_{i}" for i in range(ds.meta.o_dim)]
        + [f"act_{i}" for i in range(ds.meta.a_dim)]
        + ["reward", "terminal", "timeout"]
    )
    with open(os.path.join(path, "data.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n_rows):
            parts = [str(int(ds.episode_ids[i])), str(int(ds.steps[i]))]
            parts += [_fmt(v) for v in ds.observations[i]]
            parts += [_fmt(v) for v in ds.actions[i]]
            parts.append(_fmt(ds.rewards[i]))
            parts.append(str(int(ds.terminals[i])))
            parts.append(str(int(ds.timeouts[i])))
            fh.write(",".join(parts) + "\n")


def read_dataset(path: str) -> Dataset:
    with open(os.path.join(path, "meta.json"), encoding="utf-8") as fh:
        raw = json.load(fh)
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatchError(
            f"dataset format {version!r}; this reader supports {FORMAT_VERSION!r}"
        )
    meta = DatasetMeta(**raw)
    o_dim, a_dim = meta.o_dim, meta.a_dim
    n_cols = 2 + o_dim + a_dim + 3
    episode_ids, steps, rewards, terminals, timeouts = [], [], [], [], []
    observations, actions = [], []
    with open(os.path.join(path, "data.csv"), encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if len(header) != n_cols:
            raise CorruptRowError(
                f"header has {len(header)} columns, expected {n_cols}"
            )
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != n_cols:
                raise CorruptRowError(f"line {lineno}: {len(parts)} columns")
            try:
                episode_ids.append(int(parts[0]))
                steps.append(int(parts[1]))
                observations.append([float(v) for v in parts[2 : 2 + o_dim]])
                actions.append(
                    [float(v) for v in parts[2 + o_dim : 2 + o_dim + a_dim]]
                )
                rewards.append(float(parts[2 + o_dim + a_dim]))
                terminals.append(bool(int(parts[2 + o_dim + a_dim + 1])))
                timeouts.append(bool(int(parts[2 + o_dim + a_dim + 2])))
            except ValueError as exc:
                raise CorruptRowError(f"line {lineno}: {exc}") from exc
    n = len(rewards)
    return Dataset(
        meta=meta,
        episode_ids=np.asarray(episode_ids, dtype=np.int64),
        steps=np.asarray(steps, dtype=np.int64),
        observations=np.asarray(observations, float).reshape(n, o_dim),
        actions=np.asarray(actions, float).reshape(n, a_dim),
        rewards=np.asarray(rewards, float),
        terminals=np.asarray(terminals, dtype=bool),
        timeouts=np.asarray(timeouts, dtype=bool),
    )


def episode_slices(ds: Dataset) -> list[slice]:
    """Row ranges of each episode; closing rows must partition the table."""
    slices = []
    start = 0
    for i in range(ds.n_rows):
        if ds.terminals[i] or ds.timeouts[i] or (
            i + 1 < ds.n_rows and ds.episode_ids[i + 1] != ds.episode_ids[i]
        ):
            slices.append(slice(start, i + 1))
            start = i + 1
    if start != ds.n_rows:
        slices.append(slice(start, ds.n_rows))
    return slices
