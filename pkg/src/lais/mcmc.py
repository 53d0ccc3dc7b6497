"""Upper layer: MCMC chains whose visited states become proposal locations.

Three kernels are provided: Gaussian random-walk Metropolis-Hastings,
Hamiltonian Monte Carlo, and a coordinate-wise Metropolis-within-Gibbs
sweep. A chain of length T performs T transitions and records every
candidate together with its stored log-target and log-proposal values,
so later stages can reuse them without touching the target again.

Evaluation contract per chain of length T: exactly T counted target
evaluations (one per candidate; the current state's value is cached and
never recomputed). The initial state's evaluation goes to the ledger's
separate ``init_state_evals`` counter, keeping per-step budgets exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ChainInitError, GradientError
from .gaussian import as_covariance, gaussian_log_pdf
from .targets import Box, TargetDensity


@dataclass
class ChainRecord:
    """Everything one chain produced.

    ``states`` holds the T+1 visited states (initial state first);
    ``candidates`` holds the T proposed points in step order with their
    stored log-target and log-proposal values. Kernels without a
    tractable proposal density (HMC, Gibbs sweeps) leave
    ``candidate_log_proposal`` as NaN and cannot feed recycling.
    """

    chain_index: int
    algorithm: str
    states: np.ndarray                  # (T+1, D)
    state_log_target: np.ndarray        # (T+1,)
    candidates: Optional[np.ndarray]    # (T, D) or None
    candidate_log_target: Optional[np.ndarray]
    candidate_log_proposal: Optional[np.ndarray]
    accept_flags: np.ndarray            # (T,) bool
    proposal_cov: Optional[np.ndarray]  # (D, D) for random-walk kernels
    target_counter: str = "full"
    target_partial_index: Optional[int] = None
    n_divergent: int = 0

    @property
    def n_steps(self) -> int:
        return self.accept_flags.size

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags))


@dataclass
class ChainConfig:
    """One chain's full recipe; ``algorithm`` selects the kernel."""

    target: TargetDensity
    n_steps: int
    algorithm: str = "mh"               # "mh" | "hmc" | "gibbs"
    proposal_scale: object = 1.0        # std scalar / vector / covariance (mh, gibbs)
    init: object = None                 # point, Box, or callable(rng) -> point
    rng: Optional[np.random.Generator] = None
    chain_index: int = 0
    # hmc settings
    step_size: float = 0.1
    n_leapfrog: int = 1
    momentum_std: float = 1.0
    # gibbs settings
    inner_steps: int = 2

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("chains need at least one step")
        if self.algorithm not in ("mh", "hmc", "gibbs"):
            raise ValueError(f"unknown chain algorithm {self.algorithm!r}")


def _draw_init(config: ChainConfig, target: TargetDensity):
    """Initial state with a finite log density; up to 100 resamples."""
    rng = config.rng
    init = config.init if config.init is not None else target.init_box
    if init is None:
        raise ChainInitError(
            f"chain {config.chain_index}: no init point, box, or sampler given",
            chain_index=config.chain_index,
        )
    if isinstance(init, np.ndarray) or (
        not isinstance(init, Box) and not callable(init)
    ):
        x = np.asarray(init, dtype=float)
        lt = target.log_unnorm(x, init=True)
        if lt == -np.inf:
            raise ChainInitError(
                f"chain {config.chain_index}: fixed init state has zero density",
                chain_index=config.chain_index,
            )
        return x, lt
    for _ in range(100):
        x = init.sample(rng) if isinstance(init, Box) else np.asarray(init(rng), float)
        lt = target.log_unnorm(x, init=True)
        if lt > -np.inf:
            return x, lt
    raise ChainInitError(
        f"chain {config.chain_index}: no valid init in 100 draws",
        chain_index=config.chain_index,
    )


def rw_mh_step(state, log_state, target: TargetDensity, prop_chol, prop_cov, rng):
    """One random-walk MH transition.

    The proposal is symmetric, so the acceptance ratio reduces to the
    target ratio; the proposal's log density at the candidate is still
    computed and stored for later reuse, charged as one proposal
    evaluation. A candidate with zero density is rejected outright.

    Returns (state, log_state, candidate, cand_log_target,
    cand_log_proposal, accepted).
    """
    z = state + prop_chol @ rng.standard_normal(state.size)
    log_z = target.log_unnorm(z)
    log_prop = gaussian_log_pdf(z, state, prop_cov)
    target.ledger.count_proposal(1)
    accepted = False
    if log_z > -np.inf:
        if np.log(rng.uniform()) < log_z - log_state:
            accepted = True
    if accepted:
        return z, log_z, z, log_z, log_prop, True
    return state, log_state, z, log_z, log_prop, False


def run_mh_chain(config: ChainConfig) -> ChainRecord:
    """Random-walk chain of ``n_steps`` transitions."""
    target = config.target
    d = target.dimension
    cov = as_covariance(config.proposal_scale, d)
    chol = np.linalg.cholesky(cov)
    x, lt = _draw_init(config, target)
    T = config.n_steps
    states = np.empty((T + 1, d))
    state_lt = np.empty(T + 1)
    cands = np.empty((T, d))
    cand_lt = np.empty(T)
    cand_lp = np.empty(T)
    flags = np.empty(T, dtype=bool)
    states[0] = x
    state_lt[0] = lt
    for t in range(T):
        x, lt, z, lz, lp, acc = rw_mh_step(x, lt, target, chol, cov, config.rng)
        states[t + 1] = x
        state_lt[t + 1] = lt
        cands[t] = z
        cand_lt[t] = lz
        cand_lp[t] = lp
        flags[t] = acc
    return ChainRecord(
        chain_index=config.chain_index,
        algorithm="mh",
        states=states,
        state_log_target=state_lt,
        candidates=cands,
        candidate_log_target=cand_lt,
        candidate_log_proposal=cand_lp,
        accept_flags=flags,
        proposal_cov=cov,
        target_counter=target.counter,
        target_partial_index=target.partial_index,
    )


def leapfrog(x, p, target: TargetDensity, step_size: float, n_steps: int,
             momentum_var: float):
    """Leapfrog integration of Hamiltonian dynamics.

    Costs ``n_steps + 1`` gradient evaluations on a full trajectory; the
    gradient at each step's endpoint doubles as the next step's start.
    A trajectory that leaves the support, overflows, or produces a
    non-finite gradient aborts early with the divergence flag set.
    """
    from .errors import NumericalError

    x = x.copy()
    p = p.copy()
    # overflow here is a detected outcome (divergence), not an error
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            g = target.grad_log(x)
        except (GradientError, NumericalError):
            return x, p, True
        for _ in range(n_steps):
            p = p + 0.5 * step_size * g
            x = x + step_size * p / momentum_var
            if not np.all(np.isfinite(x)):
                return x, p, True
            try:
                g = target.grad_log(x)
            except (GradientError, NumericalError):
                return x, p, True
            if not np.all(np.isfinite(g)):
                return x, p, True
            p = p + 0.5 * step_size * g
    return x, p, False


def hmc_step(state, log_state, target: TargetDensity, config: ChainConfig, rng):
    """One HMC transition; divergent trajectories are rejected."""
    lam2 = config.momentum_std**2
    p0 = config.momentum_std * rng.standard_normal(state.size)
    h0 = -log_state + 0.5 * (p0 @ p0) / lam2
    z, p1, diverged = leapfrog(
        state, p0, target, config.step_size, config.n_leapfrog, lam2
    )
    if diverged:
        return state, log_state, state.copy(), -np.inf, False, True
    log_z = target.log_unnorm(z)
    h1 = -log_z + 0.5 * (p1 @ p1) / lam2
    accepted = log_z > -np.inf and np.log(rng.uniform()) < h0 - h1
    if accepted:
        return z, log_z, z, log_z, True, False
    return state, log_state, z, log_z, False, False


def run_hmc_chain(config: ChainConfig) -> ChainRecord:
    target = config.target
    d = target.dimension
    x, lt = _draw_init(config, target)
    T = config.n_steps
    states = np.empty((T + 1, d))
    state_lt = np.empty(T + 1)
    cands = np.empty((T, d))
    cand_lt = np.empty(T)
    flags = np.empty(T, dtype=bool)
    states[0] = x
    state_lt[0] = lt
    n_div = 0
    for t in range(T):
        x, lt, z, lz, acc, div = hmc_step(x, lt, target, config, config.rng)
        n_div += int(div)
        states[t + 1] = x
        state_lt[t + 1] = lt
        cands[t] = z
        cand_lt[t] = lz
        flags[t] = acc
    return ChainRecord(
        chain_index=config.chain_index,
        algorithm="hmc",
        states=states,
        state_log_target=state_lt,
        candidates=cands,
        candidate_log_target=cand_lt,
        candidate_log_proposal=None,
        accept_flags=flags,
        proposal_cov=None,
        target_counter=target.counter,
        target_partial_index=target.partial_index,
        n_divergent=n_div,
    )


def gibbs_sweep(state, log_state, target: TargetDensity, scales, inner_steps: int, rng):
    """One coordinate-ascending sweep of random-walk updates.

    Each coordinate gets ``inner_steps`` scalar MH moves with the other
    coordinates held fixed, costing ``dimension * inner_steps`` target
    evaluations in total.
    """
    x = state.copy()
    lt = log_state
    changed = False
    for j in range(x.size):
        for _ in range(inner_steps):
            z = x.copy()
            z[j] = x[j] + scales[j] * rng.standard_normal()
            lz = target.log_unnorm(z)
            if lz > -np.inf and np.log(rng.uniform()) < lz - lt:
                x = z
                lt = lz
                changed = True
    return x, lt, changed


def run_gibbs_chain(config: ChainConfig) -> ChainRecord:
    """Chain of full sweeps; one recorded state per sweep."""
    target = config.target
    d = target.dimension
    scale = np.asarray(config.proposal_scale, dtype=float)
    scales = np.full(d, float(scale)) if scale.ndim == 0 else scale
    if scales.shape != (d,) or np.any(scales <= 0):
        raise ValueError("gibbs needs one positive scale per coordinate")
    if config.inner_steps < 1:
        raise ValueError("inner_steps must be at least 1")
    x, lt = _draw_init(config, target)
    T = config.n_steps
    states = np.empty((T + 1, d))
    state_lt = np.empty(T + 1)
    flags = np.empty(T, dtype=bool)
    states[0] = x
    state_lt[0] = lt
    for t in range(T):
        x, lt, changed = gibbs_sweep(x, lt, target, scales, config.inner_steps, config.rng)
        states[t + 1] = x
        state_lt[t + 1] = lt
        flags[t] = changed
    return ChainRecord(
        chain_index=config.chain_index,
        algorithm="gibbs",
        states=states,
        state_log_target=state_lt,
        candidates=None,
        candidate_log_target=None,
        candidate_log_proposal=None,
        accept_flags=flags,
        proposal_cov=None,
        target_counter=target.counter,
        target_partial_index=target.partial_index,
    )


_RUNNERS = {"mh": run_mh_chain, "hmc": run_hmc_chain, "gibbs": run_gibbs_chain}


def run_chain(config: ChainConfig) -> ChainRecord:
    return _RUNNERS[config.algorithm](config)


def run_parallel_chains(configs, threads: int = 1) -> list[ChainRecord]:
    """Run independent chains and merge their sub-ledgers in index order.

    Each chain works on a fork of its target with a private ledger;
    results and counts are identical for any thread count because every
    chain owns its random stream and the merge order is fixed.
    """
    def _one(cfg: ChainConfig):
        fork = cfg.target.fork()
        record = run_chain(replace(cfg, target=fork))
        return record, fork.ledger

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one, configs))
    else:
        results = [_one(cfg) for cfg in configs]
    for cfg, (_, sub) in zip(configs, results):
        cfg.target.ledger.merge(sub)
    return [rec for rec, _ in results]


# ---------------------------------------------------------------------------
# CSV serialisation
# ---------------------------------------------------------------------------


def chain_record_to_csv(record: ChainRecord, path) -> None:
    """Write a record; row t=0 carries the initial state (its log target
    rides in the candidate columns so a round-trip loses nothing)."""
    d = record.dimension
    header = (
        ["t", "accepted"]
        + [f"state_{j + 1}" for j in range(d)]
        + [f"candidate_{j + 1}" for j in range(d)]
        + ["log_target_candidate", "log_proposal_candidate"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        init_row = (
            [0, 1]
            + [repr(float(v)) for v in record.states[0]]
            + [repr(float(v)) for v in record.states[0]]
            + [repr(float(record.state_log_target[0])), "nan"]
        )
        writer.writerow(init_row)
        for t in range(record.n_steps):
            if record.candidates is not None:
                cand = [repr(float(v)) for v in record.candidates[t]]
                clt = repr(float(record.candidate_log_target[t]))
                clp = (
                    "nan"
                    if record.candidate_log_proposal is None
                    else repr(float(record.candidate_log_proposal[t]))
                )
            else:
                cand = ["nan"] * d
                clt = "nan"
                clp = "nan"
            writer.writerow(
                [t + 1, int(record.accept_flags[t])]
                + [repr(float(v)) for v in record.states[t + 1]]
                + cand
                + [clt, clp]
            )


def chain_record_from_csv(path, *, chain_index: int = 0, algorithm: str = "mh",
                          proposal_cov=None) -> ChainRecord:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("state_"))
        rows = [row for row in reader if row]
    T = len(rows) - 1
    states = np.empty((T + 1, d))
    state_lt = np.empty(T + 1)
    cands = np.empty((T, d))
    cand_lt = np.empty(T)
    cand_lp = np.empty(T)
    flags = np.empty(T, dtype=bool)
    first = rows[0]
    states[0] = [float(v) for v in first[2 : 2 + d]]
    state_lt[0] = float(first[2 + 2 * d])
    for t, row in enumerate(rows[1:]):
        flags[t] = bool(int(row[1]))
        states[t + 1] = [float(v) for v in row[2 : 2 + d]]
        cands[t] = [float(v) for v in row[2 + d : 2 + 2 * d]]
        cand_lt[t] = float(row[2 + 2 * d])
        cand_lp[t] = float(row[3 + 2 * d])
    state_lt[1:] = np.where(flags, cand_lt, 0.0)
    for t in range(T):
        if not flags[t]:
            state_lt[t + 1] = state_lt[t]
    has_cands = not np.all(np.isnan(cands))
    return ChainRecord(
        chain_index=chain_index,
        algorithm=algorithm,
        states=states,
        state_log_target=state_lt,
        candidates=cands if has_cands else None,
        candidate_log_target=cand_lt if has_cands else None,
        candidate_log_proposal=None if np.all(np.isnan(cand_lp)) else cand_lp,
        accept_flags=flags,
        proposal_cov=None if proposal_cov is None else np.asarray(proposal_cov, float),
        target_counter="full",
    )
