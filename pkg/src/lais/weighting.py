"""Lower layer: proposal banks, importance weighting, and estimators.

Chain states become location parameters of Gaussian proposals. Samples
drawn around them are weighted by ``w = pi(x) / Phi(x)`` where the
denominator ``Phi`` mixes the bank at one of four granularities:

  standard   own proposal only                cost 1 per sample
  spatial    across chains at the same step   cost N per sample
  temporal   across steps of the same chain   cost T per sample
  complete   the whole bank                   cost N*T per sample
  compressed a clustered summary mixture      cost B per sample

Recycling reuses the chains' rejected-or-accepted candidates and their
stored evaluations instead of drawing new points; the numerators then
cost nothing and each denominator reuses its one stored value.

Every pairwise proposal density goes through the same accumulation
arithmetic regardless of scheme, so the degenerate layouts (one chain or
one step) give bit-identical weights across the scheme pairs they
collapse to.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .compression import CompressedMixture
from .errors import DegenerateWeightsError
from .gaussian import as_covariance, isotropic_sigma2
from .ledger import EvalLedger
from .mcmc import ChainRecord
from .targets import TargetDensity

_LOG_2PI = np.log(2.0 * np.pi)

SCHEME_KINDS = ("standard", "spatial", "temporal", "complete", "compressed")

# near-total weight concentration: a single sample carries all the mass
_DEGENERATE_MAX_WEIGHT = 1.0 - 1e-12
_DEGENERATE_ESS = 1.0 + 1e-6


@dataclass(frozen=True)
class DenominatorScheme:
    """Which mixture of the bank divides the target density."""

    kind: str
    mixture: Optional[CompressedMixture] = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown denominator scheme {self.kind!r}")
        if self.kind == "compressed" and self.mixture is None:
            raise ValueError("compressed scheme needs a mixture")


def scheme(kind: str, mixture: Optional[CompressedMixture] = None) -> DenominatorScheme:
    return DenominatorScheme(kind, mixture)


@dataclass
class ProposalBank:
    """Locations (one per chain and step) plus per-chain covariances."""

    locations: np.ndarray  # (N, T, D)
    covs: np.ndarray       # (N, D, D)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        if self.locations.ndim != 3:
            raise ValueError("locations must be (chains, steps, dim)")
        n, _, d = self.locations.shape
        if self.covs.shape != (n, d, d):
            raise ValueError("need one (D, D) covariance per chain")

    @property
    def n_chains(self) -> int:
        return self.locations.shape[0]

    @property
    def n_steps(self) -> int:
        return self.locations.shape[1]

    @property
    def dimension(self) -> int:
        return self.locations.shape[2]

    @property
    def size(self) -> int:
        return self.n_chains * self.n_steps

    def shared_iso_sigma2(self) -> Optional[float]:
        """sigma^2 if every chain uses the same isotropic covariance."""
        s2 = isotropic_sigma2(self.covs[0])
        if s2 is None:
            return None
        for n in range(1, self.n_chains):
            if not np.array_equal(self.covs[n], self.covs[0]):
                return None
        return s2


def build_bank(records: list[ChainRecord], cov=None,
               use_initial_states: bool = False) -> ProposalBank:
    """Assemble the proposal bank from chain outputs.

    By default the locations are the post-step states (step 1..T); with
    ``use_initial_states`` they are the conditioning states (0..T-1),
    which is the layout recycling uses. ``cov`` overrides the chains' own
    random-walk covariances (mandatory for kernels that have none).
    """
    if not records:
        raise ValueError("no chain records given")
    T = records[0].n_steps
    d = records[0].dimension
    n = len(records)
    locations = np.empty((n, T, d))
    covs = np.empty((n, d, d))
    for i, rec in enumerate(records):
        if rec.n_steps != T or rec.dimension != d:
            raise ValueError("all chains must share the same length and dimension")
        locations[i] = rec.states[:-1] if use_initial_states else rec.states[1:]
        if cov is not None:
            covs[i] = as_covariance(cov, d)
        elif rec.proposal_cov is not None:
            covs[i] = rec.proposal_cov
        else:
            raise ValueError(
                f"chain {rec.chain_index} has no proposal covariance; pass cov="
            )
    return ProposalBank(locations=locations, covs=covs)


def draw_lower_samples(bank: ProposalBank, n_per_proposal: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(N, T, M, D) draws, chain-major then step then repeat index."""
    if n_per_proposal < 1:
        raise ValueError("need at least one draw per proposal")
    N, T, D = bank.locations.shape
    out = np.empty((N, T, n_per_proposal, D))
    for n in range(N):
        chol = np.linalg.cholesky(bank.covs[n])
        z = rng.standard_normal((T, n_per_proposal, D))
        out[n] = bank.locations[n][:, None, :] + z @ chol.T
    return out


# ---------------------------------------------------------------------------
# pairwise proposal-density tables
#
# One arithmetic path for every scheme: squared distances are accumulated
# axis by axis so a pair's value never depends on which other pairs are
# computed alongside it.
# ---------------------------------------------------------------------------


def _iso_pair_logq(X: np.ndarray, MU: np.ndarray, sigma2: float) -> np.ndarray:
    """(S, R) table of log N(x_s | mu_r, sigma2 I)."""
    d = X.shape[1]
    sq = np.zeros((X.shape[0], MU.shape[0]))
    for j in range(d):
        diff = X[:, j, None] - MU[None, :, j]
        sq += diff * diff
    return -0.5 * d * (_LOG_2PI + np.log(sigma2)) - 0.5 / sigma2 * sq


def _iso_paired_logq(X: np.ndarray, MU: np.ndarray, sigma2: float) -> np.ndarray:
    """(S,) log N(x_s | mu_s, sigma2 I) for row-aligned points."""
    d = X.shape[1]
    sq = np.zeros(X.shape[0])
    for j in range(d):
        diff = X[:, j] - MU[:, j]
        sq += diff * diff
    return -0.5 * d * (_LOG_2PI + np.log(sigma2)) - 0.5 / sigma2 * sq


def _whiten(chol: np.ndarray, A: np.ndarray) -> np.ndarray:
    return np.linalg.solve(chol, A.T).T


def _full_pair_logq(X: np.ndarray, MU: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """(S, R) table for one dense covariance shared by the MU rows."""
    chol = np.linalg.cholesky(cov)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    Xw = _whiten(chol, X)
    Mw = _whiten(chol, MU)
    d = X.shape[1]
    sq = np.zeros((X.shape[0], MU.shape[0]))
    for j in range(d):
        diff = Xw[:, j, None] - Mw[None, :, j]
        sq += diff * diff
    return -0.5 * (d * _LOG_2PI + logdet) - 0.5 * sq


def gaussian_log_pdf(x, mean, cov) -> float:
    """log N(x | mean, cov) through the shared table arithmetic."""
    x = np.asarray(x, dtype=float)[None, :]
    mean = np.asarray(mean, dtype=float)[None, :]
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        return float(_iso_pair_logq(x, mean, float(cov))[0, 0])
    s2 = isotropic_sigma2(cov)
    if s2 is not None:
        return float(_iso_pair_logq(x, mean, s2)[0, 0])
    return float(_full_pair_logq(x, mean, cov)[0, 0])


def _chunk_size(bank_cols: int) -> int:
    return max(1, int(2.0e7 // max(bank_cols, 1)))


def _log_denominators(bank: ProposalBank, den: DenominatorScheme,
                      X: np.ndarray, chain_idx: np.ndarray,
                      step_idx: np.ndarray):
    """log Phi for each sample plus the number of proposal evaluations."""
    S = X.shape[0]
    N, T, D = bank.locations.shape
    out = np.empty(S)

    if den.kind == "compressed":
        logphi = den.mixture.log_pdf_batch(X)
        return logphi, S * den.mixture.n_components

    s2 = bank.shared_iso_sigma2()

    if den.kind == "standard":
        mu_own = bank.locations[chain_idx, step_idx]
        if s2 is not None:
            out = _iso_paired_logq(X, mu_own, s2)
        else:
            out = np.empty(S)
            for n in range(N):
                rows = np.flatnonzero(chain_idx == n)
                if rows.size == 0:
                    continue
                chol = np.linalg.cholesky(bank.covs[n])
                logdet = 2.0 * np.sum(np.log(np.diag(chol)))
                diff = _whiten(chol, X[rows] - mu_own[rows])
                out[rows] = -0.5 * (D * _LOG_2PI + logdet) - 0.5 * np.sum(
                    diff * diff, axis=1
                )
        return out, S

    if den.kind == "temporal":
        log_t = np.log(T)
        for n in range(N):
            rows = np.flatnonzero(chain_idx == n)
            if rows.size == 0:
                continue
            if s2 is not None:
                table = _iso_pair_logq(X[rows], bank.locations[n], s2)
            else:
                table = _full_pair_logq(X[rows], bank.locations[n], bank.covs[n])
            out[rows] = logsumexp(table, axis=1) - log_t
        return out, S * T

    if den.kind == "spatial":
        log_n = np.log(N)
        for t in range(T):
            rows = np.flatnonzero(step_idx == t)
            if rows.size == 0:
                continue
            mus = bank.locations[:, t, :]
            if s2 is not None:
                table = _iso_pair_logq(X[rows], mus, s2)
            else:
                table = np.empty((rows.size, N))
                for n in range(N):
                    table[:, n] = _full_pair_logq(
                        X[rows], mus[n : n + 1], bank.covs[n]
                    )[:, 0]
            out[rows] = logsumexp(table, axis=1) - log_n
        return out, S * N

    if den.kind == "complete":
        log_nt = np.log(N * T)
        flat = bank.locations.reshape(N * T, D)
        chunk = _chunk_size(N * T)
        for lo in range(0, S, chunk):
            hi = min(lo + chunk, S)
            if s2 is not None:
                table = _iso_pair_logq(X[lo:hi], flat, s2)
            else:
                table = np.empty((hi - lo, N * T))
                for n in range(N):
                    table[:, n * T : (n + 1) * T] = _full_pair_logq(
                        X[lo:hi], bank.locations[n], bank.covs[n]
                    )
            out[lo:hi] = logsumexp(table, axis=1) - log_nt
        return out, S * N * T

    raise ValueError(f"unknown denominator scheme {den.kind!r}")


def eval_denominator(bank: ProposalBank, den: DenominatorScheme, x,
                     origin: Optional[tuple[int, int]] = None,
                     ledger: Optional[EvalLedger] = None) -> float:
    """Phi at a single point (log domain); counts onto ``ledger`` if given."""
    x = np.asarray(x, dtype=float)
    if x.shape != (bank.dimension,):
        raise ValueError(f"point must have shape ({bank.dimension},)")
    if den.kind in ("standard", "spatial", "temporal") and origin is None:
        raise ValueError(f"scheme {den.kind!r} needs the sample's (chain, step) origin")
    n, t = origin if origin is not None else (0, 0)
    if not (0 <= n < bank.n_chains and 0 <= t < bank.n_steps):
        raise ValueError(f"origin {origin} outside bank of shape "
                         f"({bank.n_chains}, {bank.n_steps})")
    vals, count = _log_denominators(
        bank, den, x[None, :], np.array([n]), np.array([t])
    )
    if ledger is not None:
        ledger.count_proposal(count)
    return float(vals[0])


# ---------------------------------------------------------------------------
# weighted sample sets
# ---------------------------------------------------------------------------


@dataclass
class WeightedSampleSet:
    """Samples with log weights and their bank coordinates.

    Zero-weight samples (log weight ``-inf``) stay in the set: they
    still divide the normalising-constant estimate.
    """

    samples: np.ndarray       # (S, D)
    log_weights: np.ndarray   # (S,)
    chain_idx: np.ndarray     # (S,)
    step_idx: np.ndarray      # (S,)
    draw_idx: np.ndarray      # (S,)
    scheme: str
    degenerate: bool = False
    n_zero_weight: int = 0

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights
        finite = lw > -np.inf
        if not np.any(finite):
            raise DegenerateWeightsError(
                "all weights are zero",
                max_log_weight=-np.inf,
                n_zero_weight=self.count,
            )
        w = np.exp(lw - np.max(lw[finite]))
        return w / w.sum()

    def ess(self) -> float:
        lw = self.log_weights
        if not np.any(lw > -np.inf):
            return 0.0
        return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def _finish_set(samples, log_w, chain_idx, step_idx, draw_idx, kind) -> WeightedSampleSet:
    if np.isnan(log_w).any():
        raise DegenerateWeightsError("NaN appeared in log weights")
    n_zero = int(np.sum(log_w == -np.inf))
    if n_zero == log_w.size:
        raise DegenerateWeightsError(
            "every sample has zero target density",
            max_log_weight=-np.inf,
            n_zero_weight=n_zero,
        )
    wss = WeightedSampleSet(
        samples=samples,
        log_weights=log_w,
        chain_idx=chain_idx,
        step_idx=step_idx,
        draw_idx=draw_idx,
        scheme=kind,
        n_zero_weight=n_zero,
    )
    w = wss.normalized_weights()
    ess = wss.ess()
    wss.degenerate = bool(w.max() > _DEGENERATE_MAX_WEIGHT and ess < _DEGENERATE_ESS)
    return wss


def weight_samples(target: TargetDensity, bank: ProposalBank,
                   den: DenominatorScheme, samples: np.ndarray) -> WeightedSampleSet:
    """Weight bank-drawn samples: ``log w = log pi(x) - log Phi(x)``.

    ``samples`` must be the (N, T, M, D) array from
    :func:`draw_lower_samples`. Target evaluations and proposal-density
    evaluations are charged to the target's ledger.
    """
    samples = np.asarray(samples, dtype=float)
    N, T, M, D = samples.shape
    if (N, T) != (bank.n_chains, bank.n_steps) or D != bank.dimension:
        raise ValueError("sample block does not match the bank layout")
    X = samples.reshape(N * T * M, D)
    chain_idx = np.repeat(np.arange(N), T * M)
    step_idx = np.tile(np.repeat(np.arange(T), M), N)
    draw_idx = np.tile(np.arange(M), N * T)
    log_num = target.log_unnorm_batch(X)
    log_den, n_prop = _log_denominators(bank, den, X, chain_idx, step_idx)
    target.ledger.count_proposal(n_prop)
    return _finish_set(X, log_num - log_den, chain_idx, step_idx, draw_idx, den.kind)


def weight_points(target: TargetDensity, den: DenominatorScheme,
                  X: np.ndarray) -> WeightedSampleSet:
    """Weight externally drawn points against a compressed mixture."""
    if den.kind != "compressed":
        raise ValueError("weight_points handles only the compressed scheme")
    X = np.asarray(X, dtype=float)
    log_num = target.log_unnorm_batch(X)
    log_den = den.mixture.log_pdf_batch(X)
    target.ledger.count_proposal(X.shape[0] * den.mixture.n_components)
    zeros = np.zeros(X.shape[0], dtype=int)
    return _finish_set(X, log_num - log_den, zeros, zeros.copy(), zeros.copy(),
                       den.kind)


def recycle_weighting(records: list[ChainRecord], den: DenominatorScheme,
                      ledger: EvalLedger,
                      numerator_target: Optional[TargetDensity] = None) -> WeightedSampleSet:
    """Weight the chains' MH candidates without new lower-layer draws.

    Numerators reuse the stored candidate log-target values unless
    ``numerator_target`` is given (chains that explored something other
    than the weighting target, e.g. data subsets), in which case the
    candidates are re-evaluated against it.

    Denominators mix the proposals that actually generated the
    candidates, i.e. those centred on the conditioning states 0..T-1.
    The candidate's own stored proposal density is reused, so the new
    proposal evaluations per sample are 0 / N-1 / T-1 / N*T-1 for the
    standard / spatial / temporal / complete schemes.
    """
    if den.kind == "compressed":
        raise ValueError("recycling is defined for the bank schemes only")
    for rec in records:
        if (
            rec.candidates is None
            or rec.candidate_log_target is None
            or rec.candidate_log_proposal is None
            or rec.proposal_cov is None
        ):
            raise ValueError(
                f"chain {rec.chain_index} has no stored candidate evaluations; "
                "recycling needs random-walk chains"
            )
    bank = build_bank(records, use_initial_states=True)
    N, T, D = bank.locations.shape
    X = np.concatenate([rec.candidates for rec in records], axis=0)
    stored_num = np.concatenate([rec.candidate_log_target for rec in records])
    stored_prop = np.concatenate([rec.candidate_log_proposal for rec in records])
    chain_idx = np.repeat(np.arange(N), T)
    step_idx = np.tile(np.arange(T), N)

    if numerator_target is None:
        log_num = stored_num
    else:
        log_num = numerator_target.log_unnorm_batch(X)

    if den.kind == "standard":
        log_den = stored_prop.copy()
        new_per_sample = 0
    else:
        log_den, _ = _log_denominators(bank, den, X, chain_idx, step_idx)
        new_per_sample = {"spatial": N - 1, "temporal": T - 1,
                          "complete": N * T - 1}[den.kind]
    ledger.count_proposal(X.shape[0] * new_per_sample)
    draw_idx = np.zeros(X.shape[0], dtype=int)
    return _finish_set(X, log_num - log_den, chain_idx, step_idx, draw_idx, den.kind)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


@dataclass
class EstimatorOutput:
    """Normalising constant and self-normalised moment estimates."""

    log_z_hat: float
    i_hat: np.ndarray
    ess: float
    count: int
    scheme: str
    evals: dict = field(default_factory=dict)
    degenerate: bool = False

    @property
    def z_hat(self) -> float:
        return float(np.exp(self.log_z_hat))

    def to_json_dict(self) -> dict:
        z = self.z_hat
        return {
            "log_Z_hat": float(self.log_z_hat),
            "Z_hat": z if math.isfinite(z) else None,
            "I_hat": [float(v) for v in np.atleast_1d(self.i_hat)],
            "ess": float(self.ess),
            "count": int(self.count),
            "scheme": self.scheme,
            "evals": self.evals,
        }


def estimate(wss: WeightedSampleSet,
             transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
             evals: Optional[dict] = None) -> EstimatorOutput:
    """Sample-mean normaliser and self-normalised integral estimates.

    ``log Z_hat`` divides by the full sample count, zero-weight samples
    included. ``transform`` maps the (S, D) samples to the integrand
    values (identity by default, giving the target-mean estimate).
    """
    lw = wss.log_weights
    log_z = float(logsumexp(lw) - np.log(wss.count))
    w = wss.normalized_weights()
    F = wss.samples if transform is None else np.asarray(transform(wss.samples))
    if F.ndim == 1:
        F = F[:, None]
    i_hat = w @ F
    return EstimatorOutput(
        log_z_hat=log_z,
        i_hat=i_hat,
        ess=wss.ess(),
        count=wss.count,
        scheme=wss.scheme,
        evals=evals or {},
        degenerate=wss.degenerate,
    )


def equivalent_proposal_check(location_sampler, cov, n_draws: int,
                              rng: np.random.Generator,
                              expected_mean=None, expected_location_cov=None) -> dict:
    """Moment check for the marginal proposal (location noise + jitter).

    Draws locations, perturbs each with N(0, cov), and reports the
    empirical mean and covariance next to the predicted values: the
    location mean, and the location covariance plus ``cov``.
    """
    mus = np.asarray(location_sampler(rng, n_draws), dtype=float)
    d = mus.shape[1]
    chol = np.linalg.cholesky(as_covariance(cov, d))
    xs = mus + rng.standard_normal((n_draws, d)) @ chol.T
    report = {
        "empirical_mean": xs.mean(axis=0),
        "empirical_cov": np.cov(xs.T, bias=False),
        "n_draws": n_draws,
    }
    if expected_mean is not None:
        report["expected_mean"] = np.asarray(expected_mean, dtype=float)
    if expected_location_cov is not None:
        report["expected_cov"] = np.asarray(expected_location_cov, dtype=float) + \
            as_covariance(cov, d)
    return report


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def sample_set_to_csv(wss: WeightedSampleSet, path) -> None:
    header = ["n", "t", "m"] + [f"x_{j + 1}" for j in range(wss.dimension)] + [
        "log_weight"
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(wss.count):
            writer.writerow(
                [int(wss.chain_idx[i]), int(wss.step_idx[i]), int(wss.draw_idx[i])]
                + [repr(float(v)) for v in wss.samples[i]]
                + [repr(float(wss.log_weights[i]))]
            )


def sample_set_from_csv(path, scheme_kind: str = "complete") -> WeightedSampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x_"))
        rows = [row for row in reader if row]
    S = len(rows)
    samples = np.empty((S, d))
    lw = np.empty(S)
    n_idx = np.empty(S, dtype=int)
    t_idx = np.empty(S, dtype=int)
    m_idx = np.empty(S, dtype=int)
    for i, row in enumerate(rows):
        n_idx[i], t_idx[i], m_idx[i] = int(row[0]), int(row[1]), int(row[2])
        samples[i] = [float(v) for v in row[3 : 3 + d]]
        lw[i] = float(row[3 + d])
    return _finish_set(samples, lw, n_idx, t_idx, m_idx, scheme_kind)


def estimator_output_to_json(out: EstimatorOutput, path) -> None:
    with open(path, "w") as fh:
        json.dump(out.to_json_dict(), fh, indent=2)
