"""Experiment harness: configuration, pipelines, baselines, reporting.

A single configuration names a target, an upper-layer chain setup, a
lower-layer weighting method, and run-control settings. The harness
derives every random stream from ``(master_seed, run_index, stage,
chain)``, so a result is reproducible bit for bit no matter how runs are
scheduled.

Lower-layer methods:

  lais     draw fresh samples around the chain states and weight them
           (chains on data subsets give the partial-chain variant)
  rlais    recycle the chains' candidates and stored evaluations
  pa_rlais recycle candidates from subset chains, re-evaluating the
           numerators against the full target
  clais    compress the bank to a small mixture, then sample and weight
           against that mixture
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compression import compress_locations
from .errors import BudgetMismatchError, ConfigError
from .gaussian import as_covariance, isotropic_sigma2
from .ledger import EvalLedger
from .mcmc import ChainConfig, run_parallel_chains
from .rng import (STAGE_CLUSTER, STAGE_DATA, STAGE_LOWER,
                  STAGE_PARAMS, STAGE_UPPER, derive_rng, derive_seed)
from .targets import (Box, ConjugateBasisModel, LogisticMapModel,
                      RegressionModel, TargetDensity, bimodal_gaussian_pair,
                      five_mode_mixture, gaussian_target, high_dim_mixture,
                      make_conjugate_dataset, make_logistic_map_trajectory,
                      make_regression_dataset, shifted_copy)
from .weighting import (EstimatorOutput, build_bank,
                        draw_lower_samples, estimate, recycle_weighting,
                        scheme, weight_points, weight_samples)

METHODS = ("lais", "rlais", "pa_rlais", "clais")
INVARIANTS = ("full", "partial", "tempered")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class TargetSpec:
    name: str
    dimension: int = 10
    data_seed: int = 0
    n_obs: int = 50
    noise_std: float = 0.1
    t_max: float = 10.0
    length: int = 20
    growth_rate: float = 3.7
    capacity: float = 0.4
    log_noise_std: float = 0.01
    n_basis: int = 4
    basis_kind: str = "gaussian"
    log_shift: float = 0.0


@dataclass
class UpperSpec:
    algorithm: str = "mh"
    n_chains: int = 2
    n_steps: int = 10
    proposal_scale: object = 1.0
    init_low: Optional[list] = None
    init_high: Optional[list] = None
    init_point: Optional[list] = None
    invariant: str = "full"
    prior_mode: str = "full"
    k_n: Optional[int] = None
    beta: float = 1.0
    step_size: float = 0.1
    n_leapfrog: int = 1
    momentum_std: float = 1.0
    step_size_range: Optional[list] = None
    leapfrog_range: Optional[list] = None
    inner_steps: int = 2


@dataclass
class LowerSpec:
    method: str = "lais"
    scheme: str = "complete"
    m_per_proposal: int = 1
    scale: object = None
    n_clusters: int = 0
    use_initial_states: bool = False


@dataclass
class RunSpec:
    n_runs: int = 1
    master_seed: int = 0
    budget: Optional[int] = None
    threads: int = 1
    label: str = "experiment"


@dataclass
class ExperimentConfig:
    target: TargetSpec
    upper: UpperSpec
    lower: LowerSpec
    run: RunSpec = field(default_factory=RunSpec)

    def validate(self) -> "ExperimentConfig":
        up, lo = self.upper, self.lower
        if lo.method not in METHODS:
            raise ConfigError(f"unknown lower-layer method {lo.method!r}")
        if up.invariant not in INVARIANTS:
            raise ConfigError(f"unknown invariant {up.invariant!r}")
        if up.algorithm not in ("mh", "hmc", "gibbs"):
            raise ConfigError(f"unknown chain algorithm {up.algorithm!r}")
        if lo.scheme not in ("standard", "spatial", "temporal", "complete",
                             "compressed"):
            raise ConfigError(f"unknown denominator scheme {lo.scheme!r}")
        if up.n_chains < 1 or up.n_steps < 1:
            raise ConfigError("chains and steps must be positive")
        if lo.method in ("rlais", "pa_rlais"):
            if up.algorithm != "mh":
                raise ConfigError("recycling needs random-walk chains")
            if lo.m_per_proposal > 1:
                raise ConfigError("recycling admits at most one sample per proposal")
            if lo.scheme == "compressed":
                raise ConfigError("recycling works on the bank schemes only")
        if lo.method == "rlais" and up.invariant != "full":
            raise ConfigError("plain recycling requires chains on the full target")
        if lo.method == "pa_rlais" and up.invariant != "partial":
            raise ConfigError("pa_rlais recycles subset chains; set invariant='partial'")
        if lo.method == "clais":
            if lo.n_clusters < 1:
                raise ConfigError("clais needs n_clusters >= 1")
            if lo.scheme != "compressed":
                raise ConfigError("clais weights against the compressed scheme")
        elif lo.scheme == "compressed":
            raise ConfigError("the compressed scheme is produced by method='clais'")
        if up.invariant == "tempered" and not up.beta > 0:
            raise ConfigError("tempering exponent must be positive")
        if up.k_n is not None:
            if up.invariant != "partial":
                raise ConfigError("k_n only applies to invariant='partial'")
            if up.k_n < 1:
                raise ConfigError("k_n must be at least 1")
        if lo.method != "clais" and lo.m_per_proposal < 1:
            raise ConfigError("samples per proposal must be at least 1")
        if self.run.n_runs < 1 or self.run.threads < 1:
            raise ConfigError("runs and threads must be positive")
        if self.run.budget is not None and self.run.budget < 0:
            raise ConfigError("budget cannot be negative")
        return self


def build_model(spec: TargetSpec):
    """(model, full target) for a target spec; model is None for closed forms."""
    name = spec.name
    if name == "five_mode_mixture":
        model, target = None, five_mode_mixture()
    elif name == "bimodal_pair":
        model, target = None, bimodal_gaussian_pair()
    elif name == "high_dim_mixture":
        model, target = None, high_dim_mixture(spec.dimension)
    elif name == "gaussian":
        model, target = None, gaussian_target(
            np.zeros(spec.dimension), np.eye(spec.dimension)
        )
    elif name == "oscillation":
        t, y = make_regression_dataset(
            spec.data_seed, n_obs=spec.n_obs, noise_std=spec.noise_std,
            t_max=spec.t_max,
        )
        model = RegressionModel(t, y, noise_std=spec.noise_std)
        target = model.posterior()
    elif name == "logistic_map":
        traj = make_logistic_map_trajectory(
            spec.data_seed, length=spec.length, growth_rate=spec.growth_rate,
            capacity=spec.capacity, log_noise_std=spec.log_noise_std,
        )
        model = LogisticMapModel(traj, spec.log_noise_std)
        target = model.posterior()
    elif name == "basis_evidence":
        times, y = make_conjugate_dataset(
            spec.data_seed, n_obs=spec.n_obs, n_basis=spec.n_basis,
            kind=spec.basis_kind,
        )
        model = ConjugateBasisModel(times, y, spec.n_basis, spec.basis_kind)
        target = model.posterior()
    else:
        raise ConfigError(f"unknown target {name!r}")
    if spec.log_shift != 0.0:
        target = shifted_copy(target, spec.log_shift)
    return model, target


TARGET_NAMES = {
    "five_mode_mixture": "five-mode bivariate Gaussian mixture (exact moments)",
    "bimodal_pair": "two correlated Gaussians, equal weights (exact moments)",
    "high_dim_mixture": "three isotropic modes in D dimensions (exact moments)",
    "gaussian": "standard Gaussian in D dimensions (exact moments)",
    "oscillation": "damped-oscillation regression posterior (data-backed)",
    "logistic_map": "noisy logistic-map parameter posterior (data-backed)",
    "basis_evidence": "basis-regression hyperparameter evidence (data-backed)",
}


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


@dataclass
class RunRow:
    run: int
    scheme: str
    n_chains: int
    n_steps: int
    m_per_proposal: int
    n_clusters: Optional[int]
    output: EstimatorOutput
    ledger: dict
    wall_upper_ms: float
    wall_lower_ms: float
    wall_weight_ms: float


@dataclass
class ExperimentResult:
    label: str
    rows: list
    aggregate: dict
    config: ExperimentConfig


def _init_spec(up: UpperSpec, target: TargetDensity):
    if up.init_point is not None:
        return np.asarray(up.init_point, dtype=float)
    if up.init_low is not None and up.init_high is not None:
        return Box.of(up.init_low, up.init_high)
    return target.init_box


def _chain_targets(config: ExperimentConfig, model, full_target: TargetDensity,
                   ledger: EvalLedger, run_index: int = 0):
    """One invariant target per chain, all charging the same ledger."""
    up = config.upper
    full_target.ledger = ledger
    if up.invariant == "full":
        return [full_target] * up.n_chains
    if model is None:
        raise ConfigError(
            f"target {config.target.name!r} has no data to split or temper"
        )
    if up.invariant == "partial":
        if up.k_n is not None:
            # fixed-size subsets drawn fresh per run, one per chain
            if up.k_n > model.n_observations():
                raise ConfigError(
                    f"k_n={up.k_n} exceeds the {model.n_observations()} "
                    "available observations"
                )
            seed = config.run.master_seed
            parts = []
            for n in range(up.n_chains):
                rng = derive_rng(seed, run_index, STAGE_DATA, n)
                idx = rng.choice(model.n_observations(), size=up.k_n,
                                 replace=False)
                parts.append(model.partial_posterior(np.sort(idx), n,
                                                     up.n_chains,
                                                     up.prior_mode))
        else:
            parts = model.partial_posteriors(up.n_chains, up.prior_mode)
        for p in parts:
            p.ledger = ledger
        return parts
    tempered = model.tempered_posterior(up.beta)
    tempered.ledger = ledger
    return [tempered] * up.n_chains


def _chain_configs(config: ExperimentConfig, targets, run_index: int):
    up = config.upper
    seed = config.run.master_seed
    configs = []
    for n in range(up.n_chains):
        target = targets[n]
        kwargs = {}
        if up.algorithm == "hmc":
            prng = derive_rng(seed, run_index, STAGE_PARAMS, n)
            step = up.step_size
            leap = up.n_leapfrog
            if up.step_size_range is not None:
                step = float(prng.uniform(*up.step_size_range))
            if up.leapfrog_range is not None:
                leap = int(prng.integers(up.leapfrog_range[0],
                                         up.leapfrog_range[1] + 1))
            kwargs = {"step_size": step, "n_leapfrog": leap,
                      "momentum_std": up.momentum_std}
        elif up.algorithm == "gibbs":
            kwargs = {"inner_steps": up.inner_steps}
        configs.append(
            ChainConfig(
                target=target,
                n_steps=up.n_steps,
                algorithm=up.algorithm,
                proposal_scale=up.proposal_scale,
                init=_init_spec(up, target),
                rng=derive_rng(seed, run_index, STAGE_UPPER, n),
                chain_index=n,
                **kwargs,
            )
        )
    return configs


def _lower_cov(config: ExperimentConfig, dim: int):
    lo = config.lower
    scale = lo.scale if lo.scale is not None else config.upper.proposal_scale
    return as_covariance(scale, dim)


def run_single(config: ExperimentConfig, run_index: int) -> RunRow:
    """Execute one seeded repetition of the configured experiment."""
    model, full_target = build_model(config.target)
    ledger = EvalLedger()
    targets = _chain_targets(config, model, full_target, ledger, run_index)
    chain_configs = _chain_configs(config, targets, run_index)

    t0 = time.perf_counter()
    records = run_parallel_chains(chain_configs)
    t1 = time.perf_counter()

    lo = config.lower
    seed = config.run.master_seed
    weight_ms = 0.0
    n_clusters = None
    if lo.method in ("rlais", "pa_rlais"):
        num_target = full_target if lo.method == "pa_rlais" else None
        tw0 = time.perf_counter()
        wss = recycle_weighting(records, scheme(lo.scheme), ledger,
                                numerator_target=num_target)
        weight_ms = (time.perf_counter() - tw0) * 1e3
        m_used = 0
    elif lo.method == "clais":
        bank = build_bank(records, cov=_lower_cov(config, full_target.dimension),
                          use_initial_states=lo.use_initial_states)
        flat = bank.locations.reshape(bank.size, bank.dimension)
        sigma_p2 = isotropic_sigma2(bank.covs[0])
        mixture = compress_locations(flat, lo.n_clusters, sigma_p2,
                                     derive_seed(seed, run_index, STAGE_CLUSTER))
        rng_low = derive_rng(seed, run_index, STAGE_LOWER)
        m_used = lo.m_per_proposal
        X = mixture.sample(rng_low, m_used * bank.size)
        tw0 = time.perf_counter()
        wss = weight_points(full_target, scheme("compressed", mixture), X)
        weight_ms = (time.perf_counter() - tw0) * 1e3
        n_clusters = lo.n_clusters
    else:
        bank = build_bank(records, cov=_lower_cov(config, full_target.dimension),
                          use_initial_states=lo.use_initial_states)
        rng_low = derive_rng(seed, run_index, STAGE_LOWER)
        samples = draw_lower_samples(bank, lo.m_per_proposal, rng_low)
        m_used = lo.m_per_proposal
        tw0 = time.perf_counter()
        wss = weight_samples(full_target, bank, scheme(lo.scheme), samples)
        weight_ms = (time.perf_counter() - tw0) * 1e3
    t2 = time.perf_counter()

    out = estimate(wss, evals=ledger.snapshot())
    if config.run.budget is not None:
        observed = ledger.posterior_total()
        if observed != config.run.budget:
            raise BudgetMismatchError(
                f"run {run_index}: expected {config.run.budget} posterior "
                f"evaluations, ledger shows {observed}",
                expected=config.run.budget,
                observed=observed,
            )
    return RunRow(
        run=run_index,
        scheme=lo.scheme if lo.method != "clais" else "compressed",
        n_chains=config.upper.n_chains,
        n_steps=config.upper.n_steps,
        m_per_proposal=m_used,
        n_clusters=n_clusters,
        output=out,
        ledger=ledger.snapshot(),
        wall_upper_ms=(t1 - t0) * 1e3,
        wall_lower_ms=(t2 - t1) * 1e3,
        wall_weight_ms=weight_ms,
    )


def aggregate_mse(estimates, truth) -> dict:
    """Per-component and averaged mean squared error across runs."""
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    sq = (E - truth[None, :]) ** 2
    per = sq.mean(axis=0)
    return {"per_component": per, "mean": float(per.mean())}


def _aggregate(rows, target: TargetDensity) -> dict:
    agg: dict = {
        "n_runs": len(rows),
        "mean_ess": float(np.mean([r.output.ess for r in rows])),
        "n_degenerate": int(sum(r.output.degenerate for r in rows)),
        "ledger_totals": EvalLedger.merged(
            [_ledger_from_snapshot(r.ledger) for r in rows]
        ).snapshot(),
    }
    log_zs = np.array([r.output.log_z_hat for r in rows])
    agg["mean_log_z_hat"] = float(np.mean(log_zs))
    if target.log_z is not None:
        zs = np.exp(log_zs)
        z_true = float(np.exp(target.log_z))
        agg["z_true"] = z_true
        agg["mean_z_hat"] = float(np.mean(zs))
        agg["var_z_hat"] = float(np.var(zs))
        agg["mse_z_hat"] = float(np.mean((zs - z_true) ** 2))
        agg["mean_abs_z_error"] = float(np.mean(np.abs(zs - z_true)))
    if target.mean is not None:
        i_hats = np.array([r.output.i_hat[: target.dimension] for r in rows])
        mse = aggregate_mse(i_hats, target.mean)
        agg["mse_i_hat"] = mse["mean"]
        agg["mse_i_hat_per_component"] = mse["per_component"].tolist()
    return agg


def _ledger_from_snapshot(snap: dict) -> EvalLedger:
    led = EvalLedger()
    led.full_posterior_evals = snap["full_posterior_evals"]
    led.partial_posterior_evals = {
        int(k): v for k, v in snap["partial_posterior_evals"].items()
    }
    led.gradient_evals = snap["gradient_evals"]
    led.proposal_evals = snap["proposal_evals"]
    led.init_state_evals = snap["init_state_evals"]
    return led


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """All seeded repetitions plus aggregate statistics.

    ``threads > 1`` runs repetitions concurrently; every stream is
    derived from (master seed, run index), so results are identical to
    the sequential order.
    """
    config.validate()
    runs = config.run.n_runs
    if config.run.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.run.threads) as pool:
            rows = list(pool.map(lambda r: run_single(config, r), range(runs)))
    else:
        rows = [run_single(config, r) for r in range(runs)]
    _, target = build_model(config.target)
    return ExperimentResult(
        label=config.run.label,
        rows=rows,
        aggregate=_aggregate(rows, target),
        config=config,
    )


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


@dataclass
class BaselineRow:
    run: int
    i_hat: np.ndarray
    states: Optional[np.ndarray]
    ledger: dict
    log_z_hat: Optional[float] = None


def baseline_plain_mcmc(config: ExperimentConfig, *, keep_states: bool = False):
    """Ergodic averages of the raw chains under the same upper settings.

    Uses the identical seed derivation as the layered pipeline, so a
    matched-budget comparison differs only in what happens to the
    states. No normalising-constant estimate is available.
    """
    config.validate()
    rows = []
    for r in range(config.run.n_runs):
        model, full_target = build_model(config.target)
        ledger = EvalLedger()
        targets = _chain_targets(config, model, full_target, ledger, r)
        records = run_parallel_chains(_chain_configs(config, targets, r))
        pooled = np.concatenate([rec.states[1:] for rec in records], axis=0)
        rows.append(
            BaselineRow(
                run=r,
                i_hat=pooled.mean(axis=0),
                states=pooled if keep_states else None,
                ledger=ledger.snapshot(),
            )
        )
    return rows


def baseline_naive_mc(model, n_draws: int, seed: int, n_runs: int = 1):
    """Prior sampling: log Z_hat = logsumexp(log-likelihoods) - log draws."""
    from scipy.special import logsumexp

    rows = []
    for r in range(n_runs):
        rng = derive_rng(seed, r, STAGE_LOWER)
        support = getattr(model, "support", None)
        if hasattr(model, "sample_prior"):
            X = model.sample_prior(rng, n_draws)
        elif support is not None and np.all(np.isfinite(support.highs)):
            X = support.sample(rng, n_draws)
        else:
            raise ConfigError("model offers no prior sampler")
        ll = model.log_likelihood_batch(X)
        ledger = EvalLedger()
        ledger.count_full(n_draws)
        rows.append(
            BaselineRow(
                run=r,
                i_hat=X.mean(axis=0),
                states=None,
                ledger=ledger.snapshot(),
                log_z_hat=float(logsumexp(ll) - np.log(n_draws)),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# budget verification
# ---------------------------------------------------------------------------


def expected_ledger(config: ExperimentConfig) -> dict:
    """Evaluation counts the configuration should produce per run."""
    config.validate()
    up, lo = config.upper, config.lower
    _, target = build_model(config.target)
    d = target.dimension
    per_chain = up.n_steps * (d * up.inner_steps if up.algorithm == "gibbs" else 1)
    upper_total = up.n_chains * per_chain
    nt = up.n_chains * up.n_steps
    if lo.method == "rlais":
        lower_full = 0
    elif lo.method == "pa_rlais":
        lower_full = nt
    else:
        lower_full = lo.m_per_proposal * nt
    expected = {
        "full_posterior_evals": lower_full,
        "partial_posterior_evals_total": 0,
        "gradient_evals": 0,
    }
    if up.invariant == "partial":
        expected["partial_posterior_evals_total"] = upper_total
    else:
        expected["full_posterior_evals"] += upper_total
    if up.algorithm == "hmc" and up.leapfrog_range is None:
        expected["gradient_evals"] = upper_total * (up.n_leapfrog + 1)
    expected["posterior_total"] = (
        expected["full_posterior_evals"] + expected["partial_posterior_evals_total"]
    )
    return expected


def verify_budget(config: ExperimentConfig) -> dict:
    """Run one repetition and compare the ledger against the formulas.

    HMC chains with randomised trajectory lengths skip the gradient
    check; divergences would also show up here as honest mismatches.
    """
    expected = expected_ledger(config)
    row = run_single(config, 0)
    observed = {
        "full_posterior_evals": row.ledger["full_posterior_evals"],
        "partial_posterior_evals_total": sum(
            row.ledger["partial_posterior_evals"].values()
        ),
        "gradient_evals": row.ledger["gradient_evals"],
    }
    observed["posterior_total"] = (
        observed["full_posterior_evals"] + observed["partial_posterior_evals_total"]
    )
    keys = ["full_posterior_evals", "partial_posterior_evals_total",
            "posterior_total"]
    if config.upper.algorithm == "hmc" and config.upper.leapfrog_range is None:
        keys.append("gradient_evals")
    mismatches = {k: (expected[k], observed[k]) for k in keys
                  if expected[k] != observed[k]}
    report = {"expected": expected, "observed": observed,
              "ok": not mismatches, "mismatches": mismatches}
    if mismatches:
        raise BudgetMismatchError(
            f"budget mismatch: {mismatches}", expected=expected, observed=observed
        )
    return report


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


CSV_FIXED_COLUMNS = ["run", "scheme", "N", "T", "M", "B", "log_Z_hat"]
CSV_TAIL_COLUMNS = ["ess", "full_evals", "partial_evals", "proposal_evals",
                    "wall_upper_ms", "wall_lower_ms"]


def emit_csv(result: ExperimentResult, path) -> None:
    s = max((np.atleast_1d(r.output.i_hat).size for r in result.rows), default=0)
    header = (
        CSV_FIXED_COLUMNS
        + [f"I_hat_{j + 1}" for j in range(s)]
        + CSV_TAIL_COLUMNS
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in result.rows:
            i_hat = list(np.atleast_1d(r.output.i_hat))
            i_hat += [""] * (s - len(i_hat))
            writer.writerow(
                [
                    r.run,
                    r.scheme,
                    r.n_chains,
                    r.n_steps,
                    r.m_per_proposal,
                    "" if r.n_clusters is None else r.n_clusters,
                    repr(float(r.output.log_z_hat)),
                ]
                + [v if v == "" else repr(float(v)) for v in i_hat]
                + [
                    repr(float(r.output.ess)),
                    r.ledger["full_posterior_evals"],
                    sum(r.ledger["partial_posterior_evals"].values()),
                    r.ledger["proposal_evals"],
                    f"{r.wall_upper_ms:.3f}",
                    f"{r.wall_lower_ms:.3f}",
                ]
            )


def result_to_json_dict(result: ExperimentResult) -> dict:
    agg = {
        k: (v.tolist() if isinstance(v, np.ndarray) else v)
        for k, v in result.aggregate.items()
    }
    return {
        "label": result.label,
        "runs": [
            {
                "run": r.run,
                "N": r.n_chains,
                "T": r.n_steps,
                "M": r.m_per_proposal,
                "B": r.n_clusters,
                "wall_upper_ms": r.wall_upper_ms,
                "wall_lower_ms": r.wall_lower_ms,
                **r.output.to_json_dict(),
            }
            for r in result.rows
        ],
        "aggregate": agg,
    }


def baseline_to_json_dict(row: BaselineRow) -> dict:
    out = {
        "run": row.run,
        "I_hat": np.atleast_1d(row.i_hat).tolist(),
        "evals": row.ledger,
    }
    if row.log_z_hat is not None:
        out["log_Z_hat"] = row.log_z_hat
    return out


def emit_json(result: ExperimentResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result_to_json_dict(result), fh, indent=2)


def results_json_schema() -> dict:
    """The schema the JSON emitter's output conforms to."""
    from importlib import resources

    text = resources.files("lais").joinpath("schema/results.schema.json")
    return json.loads(text.read_text())


def emit(result: ExperimentResult, out_dir, fmt: str = "csv") -> str:
    import os

    os.makedirs(out_dir, exist_ok=True)
    name = result.label.replace(" ", "_") or "experiment"
    if fmt == "csv":
        path = os.path.join(out_dir, f"{name}.csv")
        emit_csv(result, path)
    elif fmt == "json":
        path = os.path.join(out_dir, f"{name}.json")
        emit_json(result, path)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    return path
