"""Log posterior, Gibbs/Metropolis sampling and posterior risk evaluation."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import arviz as az
import numpy as np
from scipy import linalg
from scipy import stats
from scipy.special import expit, logit

from ..base import ModelSpecError, SamplerError
from ..config import McmcConfig
from ..data import Dataset
from .design import ModelData, ModelSpec, ParameterLayout, Parameters, RandomLevel, linear_predictor
from .polya_gamma import sample_pg
from .posterior import (
    PARAMETERS_NAME,
    ParameterDraws,
    PosteriorRisks,
    clip_risks,
    load_parameters,
    load_posterior,
    save_parameters,
    save_posterior,
)

logger = logging.getLogger(__name__)

RHAT_WARNING = 1.05
DENSE_LIMIT = 200  # max coarsest-level size sampled jointly with the fixed effects
ADAPT_EVERY = 50
TARGET_ACCEPT = 0.44
DESIGN_NAME = "design.json"
DIAGNOSTICS_NAME = "diagnostics.json"


# ---------------------------------------------------------------------------
# Log densities
# ---------------------------------------------------------------------------

def _as_parameters(spec: ModelSpec, data: ModelData, params: Union[np.ndarray, Parameters]) -> Tuple[ParameterLayout, Parameters]:
    layout = ParameterLayout.of(spec, data)
    if isinstance(params, Parameters):
        vector = layout.pack(params)
    else:
        vector = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(vector)):
        raise ModelSpecError("parameter vector contains non-finite values")
    return layout, layout.unpack(vector)


def log_likelihood(spec: ModelSpec, dataset: Dataset, params: Union[np.ndarray, Parameters]) -> float:
    """Bernoulli-logistic log likelihood of every birth's outcome."""

    data = spec.prepare(dataset)
    _, parsed = _as_parameters(spec, data, params)
    eta = linear_predictor(data, parsed)
    return float(np.sum(data.y * eta - np.logaddexp(0.0, eta)))


def log_likelihood_grad(spec: ModelSpec, dataset: Dataset, params: Union[np.ndarray, Parameters]) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to the flat parameter vector.

    Variance entries do not enter the likelihood, so their components are zero.
    """

    data = spec.prepare(dataset)
    layout, parsed = _as_parameters(spec, data, params)
    resid = data.y - expit(linear_predictor(data, parsed))
    grad = np.zeros(layout.size)
    grad[: layout.n_fixed] = data.X.T @ resid
    pos = layout.n_fixed
    for lv in spec.levels:
        units = layout.n_units[lv.name]
        idx, feats = data.unit_index[lv.name], data.features[lv.name]
        block = np.column_stack([
            np.bincount(idx, weights=feats[:, a] * resid, minlength=units) for a in range(lv.dim)
        ]) if units else np.zeros((0, lv.dim))
        grad[pos:pos + units * lv.dim] = block.ravel()
        pos += units * lv.dim
    return grad


def log_prior(spec: ModelSpec, params: Parameters) -> float:
    """Fixed-effect normals, random-effect normals and the variance-component priors."""

    priors = spec.priors
    total = float(np.sum(stats.norm.logpdf(params.alpha, 0.0, np.sqrt(spec.design.prior_variances))))
    iw_scale = np.asarray(priors.iw_scale, dtype=float)
    for lv in spec.levels:
        effects, cov = params.effects[lv.name], params.cov[lv.name]
        if lv.dim == 1:
            var = float(cov[0, 0])
            if var <= 0:
                return -np.inf
            total += float(np.sum(stats.norm.logpdf(effects[:, 0], 0.0, np.sqrt(var))))
            total += float(stats.invgamma.logpdf(var, priors.ig_shape, scale=priors.ig_scale))
        else:
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                return -np.inf
            if effects.shape[0]:
                total += float(np.sum(stats.multivariate_normal.logpdf(effects, np.zeros(lv.dim), cov)))
            total += float(stats.invwishart.logpdf(cov, priors.iw_df, iw_scale))
    return total


def log_posterior(spec: ModelSpec, dataset: Dataset, params: Union[np.ndarray, Parameters]) -> float:
    """Log joint density of outcomes and parameters; every prior term is a normalized density."""

    data = spec.prepare(dataset)
    _, parsed = _as_parameters(spec, data, params)
    prior = log_prior(spec, parsed)
    if not np.isfinite(prior):
        return prior
    eta = linear_predictor(data, parsed)
    return float(np.sum(data.y * eta - np.logaddexp(0.0, eta))) + prior


# ---------------------------------------------------------------------------
# Diagnostics and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitDiagnostics:
    """Split-chain R-hat and bulk ESS per monitored parameter, plus sampler acceptance rates."""

    method: str
    chains: int
    draws_per_chain: int
    rhat: Mapping[str, float] = field(default_factory=dict)
    ess: Mapping[str, float] = field(default_factory=dict)
    acceptance: Mapping[str, float] = field(default_factory=dict)

    @property
    def max_rhat(self) -> float:
        values = [v for v in self.rhat.values() if np.isfinite(v)]
        return max(values) if values else float("nan")

    def flagged(self, threshold: float = RHAT_WARNING) -> List[str]:
        return [name for name, value in self.rhat.items() if np.isfinite(value) and value > threshold]

    def to_dict(self) -> Dict[str, Any]:
        def clean(mapping: Mapping[str, float]) -> Dict[str, Optional[float]]:
            return {k: (float(v) if np.isfinite(v) else None) for k, v in mapping.items()}

        return {
            "method": self.method,
            "chains": self.chains,
            "draws_per_chain": self.draws_per_chain,
            "max_rhat": self.max_rhat if np.isfinite(self.max_rhat) else None,
            "rhat": clean(self.rhat),
            "ess": clean(self.ess),
            "acceptance": clean(self.acceptance),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "FitDiagnostics":
        def restore(mapping: Mapping[str, Optional[float]]) -> Dict[str, float]:
            return {k: (float("nan") if v is None else float(v)) for k, v in mapping.items()}

        return cls(
            method=payload["method"],
            chains=int(payload["chains"]),
            draws_per_chain=int(payload["draws_per_chain"]),
            rhat=restore(payload.get("rhat", {})),
            ess=restore(payload.get("ess", {})),
            acceptance=restore(payload.get("acceptance", {})),
        )


def compute_diagnostics(
    draws: ParameterDraws, chains: int, method: str, acceptance: Mapping[str, float]
) -> FitDiagnostics:
    per_chain = draws.n_draws // chains
    rhat: Dict[str, float] = {}
    ess: Dict[str, float] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, trace in draws.monitored().items():
            arr = np.asarray(trace, dtype=float).reshape(chains, per_chain)
            value = float(az.rhat(arr))
            # rank-normalized split R-hat can dip just under 1 by round-off
            rhat[name] = max(value, 1.0) if np.isfinite(value) else float("nan")
            ess[name] = float(az.ess(arr))
    diagnostics = FitDiagnostics(
        method=method, chains=chains, draws_per_chain=per_chain, rhat=rhat, ess=ess, acceptance=dict(acceptance)
    )
    flagged = diagnostics.flagged()
    if flagged:
        logger.warning(
            "R-hat above %.2f for %d parameter(s): %s (max %.3f)",
            RHAT_WARNING, len(flagged), ", ".join(flagged[:10]), diagnostics.max_rhat,
        )
    return diagnostics


@dataclass(frozen=True, eq=False)
class FitResult:
    """A fitted model: specification, fitted dataset, parameter draws, risks and diagnostics."""

    spec: ModelSpec
    dataset: Dataset
    draws: ParameterDraws
    risks: PosteriorRisks
    diagnostics: FitDiagnostics

    def risks_for(self, dataset: Dataset) -> np.ndarray:
        """Per-draw risks of (possibly counterfactual) records, ``(L, len(dataset))``."""

        return predict_risks(self.spec, self.draws, dataset)


def predict_risks(spec: ModelSpec, draws: ParameterDraws, dataset: Dataset, chunk: int = 256) -> np.ndarray:
    """Evaluate every draw's inverse-logit linear predictor on ``dataset``.

    Random effects attach to each record's own units; units absent from the fit contribute zero.
    """

    if tuple(draws.column_names) != spec.design.column_names:
        raise ModelSpecError("parameter draws do not match the model design")
    data = spec.prepare(dataset, unit_labels=draws.unit_labels)
    out = np.empty((draws.n_draws, data.n))
    for start in range(0, draws.n_draws, chunk):
        stop = min(start + chunk, draws.n_draws)
        eta = draws.alpha[start:stop] @ data.X.T
        for lv in spec.levels:
            idx = data.unit_index[lv.name]
            known = np.flatnonzero(idx >= 0)
            if known.size == 0:
                continue
            effects = draws.effects[lv.name][start:stop][:, idx[known], :]
            eta[:, known] += np.einsum("kd,ckd->ck", data.features[lv.name][known], effects)
        out[start:stop] = clip_risks(expit(eta))
    return out


# ---------------------------------------------------------------------------
# Chain state and block updates
# ---------------------------------------------------------------------------

@dataclass
class _ChainState:
    alpha: np.ndarray
    effects: Dict[str, np.ndarray]
    cov: Dict[str, np.ndarray]
    fixed: np.ndarray
    contrib: Dict[str, np.ndarray]

    @property
    def eta(self) -> np.ndarray:
        eta = self.fixed.copy()
        for values in self.contrib.values():
            eta += values
        return eta


@dataclass(frozen=True, eq=False)
class _ChainTask:
    spec: ModelSpec
    data: ModelData
    mcmc: McmcConfig
    seed: np.random.SeedSequence
    chain: int


@dataclass(frozen=True, eq=False)
class _ChainOutput:
    alpha: np.ndarray
    effects: Dict[str, np.ndarray]
    cov: Dict[str, np.ndarray]
    iteration: np.ndarray
    acceptance: Dict[str, float]


def _unit_contrib(data: ModelData, name: str, effects: np.ndarray) -> np.ndarray:
    if effects.shape[0] == 0:
        return np.zeros(data.n)
    return np.einsum("ij,ij->i", data.features[name], effects[data.unit_index[name]])


def _initial_cov(spec: ModelSpec, lv: RandomLevel) -> np.ndarray:
    priors = spec.priors
    if lv.dim == 1:
        a, b = priors.ig_shape, priors.ig_scale
        return np.array([[b / (a - 1.0) if a > 1.0 else b]])
    scale = np.asarray(priors.iw_scale, dtype=float)
    return scale / (priors.iw_df - 3.0) if priors.iw_df > 3.0 else scale.copy()


def _initial_state(spec: ModelSpec, data: ModelData, rng: np.random.Generator) -> _ChainState:
    p = spec.design.n_columns
    alpha = rng.normal(0.0, 0.1, size=p)
    if data.n:
        alpha[0] += logit(np.clip(data.y.mean(), 0.01, 0.99))
    effects = {lv.name: np.zeros((len(data.unit_labels[lv.name]), lv.dim)) for lv in spec.levels}
    cov = {lv.name: _initial_cov(spec, lv) for lv in spec.levels}
    contrib = {lv.name: np.zeros(data.n) for lv in spec.levels}
    return _ChainState(alpha=alpha, effects=effects, cov=cov, fixed=data.X @ alpha, contrib=contrib)


def _unit_design(data: ModelData, name: str, units: int, dim: int) -> np.ndarray:
    Z = np.zeros((data.n, units * dim))
    rows = np.arange(data.n)
    idx, feats = data.unit_index[name], data.features[name]
    for a in range(dim):
        Z[rows, idx * dim + a] = feats[:, a]
    return Z


def _dense_level(spec: ModelSpec, data: ModelData) -> Optional[RandomLevel]:
    if not spec.levels:
        return None
    coarsest = spec.levels[-1]
    size = len(data.unit_labels[coarsest.name]) * coarsest.dim
    return coarsest if 0 < size <= DENSE_LIMIT else None


def _draw_fixed_block(
    spec: ModelSpec, data: ModelData, state: _ChainState, omega: np.ndarray,
    kappa: np.ndarray, dense: Optional[RandomLevel], Z_dense: Optional[np.ndarray], rng: np.random.Generator,
) -> None:
    """Joint Gaussian draw of the fixed effects (and the coarsest level's unit effects)."""

    offset = state.eta - state.fixed
    prior_prec = [np.diag(1.0 / spec.design.prior_variances)]
    B = data.X
    if dense is not None:
        offset = offset - state.contrib[dense.name]
        units = state.effects[dense.name].shape[0]
        prior_prec.append(np.kron(np.eye(units), np.linalg.inv(state.cov[dense.name])))
        B = np.hstack([data.X, Z_dense])
    precision = B.T @ (omega[:, None] * B) + linalg.block_diag(*prior_prec)
    rhs = B.T @ (kappa - omega * offset)
    chol = linalg.cholesky(precision, lower=True)
    mean = linalg.cho_solve((chol, True), rhs)
    theta = mean + linalg.solve_triangular(chol.T, rng.standard_normal(len(mean)), lower=False)

    p = spec.design.n_columns
    state.alpha = theta[:p]
    state.fixed = data.X @ state.alpha
    if dense is not None:
        state.effects[dense.name] = theta[p:].reshape(-1, dense.dim)
        state.contrib[dense.name] = Z_dense @ theta[p:]


def _draw_unit_effects(
    data: ModelData, lv: RandomLevel, state: _ChainState, omega: np.ndarray,
    kappa: np.ndarray, rng: np.random.Generator,
) -> None:
    """Independent conjugate draws for every unit of one level, batched over units."""

    units = state.effects[lv.name].shape[0]
    if units == 0:
        return
    idx, feats = data.unit_index[lv.name], data.features[lv.name]
    offset = state.eta - state.contrib[lv.name]
    resid = kappa - omega * offset
    d = lv.dim
    precision = np.empty((units, d, d))
    for a in range(d):
        for b in range(a, d):
            precision[:, a, b] = np.bincount(idx, weights=omega * feats[:, a] * feats[:, b], minlength=units)
            precision[:, b, a] = precision[:, a, b]
    precision += np.linalg.inv(state.cov[lv.name])
    rhs = np.stack([np.bincount(idx, weights=feats[:, a] * resid, minlength=units) for a in range(d)], axis=1)
    chol = np.linalg.cholesky(precision)
    mean = np.linalg.solve(precision, rhs[..., None])[..., 0]
    noise = np.linalg.solve(np.swapaxes(chol, -1, -2), rng.standard_normal((units, d, 1)))[..., 0]
    state.effects[lv.name] = mean + noise
    state.contrib[lv.name] = _unit_contrib(data, lv.name, state.effects[lv.name])


def _draw_variances(spec: ModelSpec, state: _ChainState, rng: np.random.Generator) -> None:
    priors = spec.priors
    iw_scale = np.asarray(priors.iw_scale, dtype=float)
    for lv in spec.levels:
        effects = state.effects[lv.name]
        units = effects.shape[0]
        if lv.dim == 1:
            shape = priors.ig_shape + units / 2.0
            scale = priors.ig_scale + float(np.sum(effects ** 2)) / 2.0
            state.cov[lv.name] = np.array([[scale / rng.gamma(shape)]])
        else:
            scatter = effects.T @ effects
            draw = stats.invwishart.rvs(df=priors.iw_df + units, scale=iw_scale + scatter, random_state=rng)
            state.cov[lv.name] = np.atleast_2d(draw)


def _check_finite(state: _ChainState, chain: int, iteration: int, block: str) -> None:
    values = [state.alpha, *state.effects.values(), *state.cov.values()]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise SamplerError("non-finite parameter state", chain=chain, iteration=iteration, block=block)


@contextmanager
def _block(state: _ChainState, chain: int, iteration: int, block: str) -> Iterator[None]:
    """Run one Gibbs block; singular matrices and non-finite results become ``SamplerError``."""

    try:
        yield
    except np.linalg.LinAlgError as exc:
        raise SamplerError(f"linear algebra failure: {exc}", chain=chain, iteration=iteration, block=block) from exc
    _check_finite(state, chain, iteration, block)


class _Adapter:
    """Batch-wise random-walk scale tuning during warmup."""

    def __init__(self, size: int) -> None:
        self.log_scale = np.full(size, np.log(0.5))
        self.accepted = np.zeros(size)
        self.tried = np.zeros(size)
        self.batches = 0

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def record(self, accepted: np.ndarray, tried: np.ndarray) -> None:
        self.accepted += accepted
        self.tried += tried

    def adapt(self) -> None:
        self.batches += 1
        step = min(0.05, 1.0 / np.sqrt(self.batches))
        rate = np.divide(self.accepted, self.tried, out=np.full_like(self.tried, TARGET_ACCEPT), where=self.tried > 0)
        self.log_scale += np.where(rate > TARGET_ACCEPT, step, -step)
        self.accepted[:] = 0
        self.tried[:] = 0


def _metropolis_fixed(
    spec: ModelSpec, data: ModelData, state: _ChainState, adapter: _Adapter, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    prior_var = spec.design.prior_variances
    eta = state.eta
    accepted = np.zeros(len(state.alpha))
    for j in range(len(state.alpha)):
        step = adapter.scale[j] * rng.standard_normal()
        delta = step * data.X[:, j]
        proposal = eta + delta
        log_ratio = float(np.sum(data.y * delta - np.logaddexp(0.0, proposal) + np.logaddexp(0.0, eta)))
        new = state.alpha[j] + step
        log_ratio -= (new ** 2 - state.alpha[j] ** 2) / (2.0 * prior_var[j])
        if np.log(rng.random()) < log_ratio:
            state.alpha[j] = new
            eta = proposal
            accepted[j] = 1.0
    state.fixed = data.X @ state.alpha
    return accepted, np.ones(len(state.alpha))


def _metropolis_units(
    data: ModelData, lv: RandomLevel, state: _ChainState, scale: float, rng: np.random.Generator
) -> Tuple[float, float]:
    effects = state.effects[lv.name]
    units = effects.shape[0]
    if units == 0:
        return 0.0, 0.0
    idx, feats = data.unit_index[lv.name], data.features[lv.name]
    proposal = effects + scale * rng.standard_normal(effects.shape)
    eta = state.eta
    delta = np.einsum("ij,ij->i", feats, (proposal - effects)[idx])
    site = data.y * delta - np.logaddexp(0.0, eta + delta) + np.logaddexp(0.0, eta)
    log_ratio = np.bincount(idx, weights=site, minlength=units)
    prec = np.linalg.inv(state.cov[lv.name])
    quad_new = np.einsum("ui,ij,uj->u", proposal, prec, proposal)
    quad_old = np.einsum("ui,ij,uj->u", effects, prec, effects)
    log_ratio -= 0.5 * (quad_new - quad_old)
    accept = np.log(rng.random(units)) < log_ratio
    state.effects[lv.name] = np.where(accept[:, None], proposal, effects)
    state.contrib[lv.name] = _unit_contrib(data, lv.name, state.effects[lv.name])
    return float(accept.sum()), float(units)


def _run_chain(task: _ChainTask) -> _ChainOutput:
    spec, data, mcmc, chain = task.spec, task.data, task.mcmc, task.chain
    rng = np.random.default_rng(task.seed)
    state = _initial_state(spec, data, rng)
    kappa = data.y - 0.5
    dense = _dense_level(spec, data)
    Z_dense = _unit_design(data, dense.name, len(data.unit_labels[dense.name]), dense.dim) if dense else None

    total = mcmc.warmup + mcmc.draws * mcmc.thin
    p = spec.design.n_columns
    alpha_out = np.empty((mcmc.draws, p))
    effects_out = {lv.name: np.empty((mcmc.draws, *state.effects[lv.name].shape)) for lv in spec.levels}
    cov_out = {lv.name: np.empty((mcmc.draws, lv.dim, lv.dim)) for lv in spec.levels}
    iterations = np.empty(mcmc.draws, dtype=np.int64)

    fixed_adapter = _Adapter(p)
    level_adapter = _Adapter(len(spec.levels))
    kept_accept = np.zeros(1 + len(spec.levels))
    kept_tried = np.zeros(1 + len(spec.levels))

    logger.info("Chain %d: %d warmup + %d retained iterations (%s)", chain, mcmc.warmup, mcmc.draws, mcmc.method)
    saved = 0
    for it in range(total):
        if mcmc.method == "polya-gamma":
            omega = sample_pg(state.eta, rng)
            with _block(state, chain, it, "fixed"):
                _draw_fixed_block(spec, data, state, omega, kappa, dense, Z_dense, rng)
            for lv in spec.levels:
                if dense is not None and lv.name == dense.name:
                    continue
                with _block(state, chain, it, lv.name):
                    _draw_unit_effects(data, lv, state, omega, kappa, rng)
        else:
            with _block(state, chain, it, "fixed"):
                acc, tried = _metropolis_fixed(spec, data, state, fixed_adapter, rng)
            fixed_adapter.record(acc, tried)
            step_acc = [acc.mean()]
            step_tried = [1.0]
            for k, lv in enumerate(spec.levels):
                with _block(state, chain, it, lv.name):
                    a, n = _metropolis_units(data, lv, state, float(level_adapter.scale[k]), rng)
                level_adapter.record(np.eye(len(spec.levels))[k] * a, np.eye(len(spec.levels))[k] * n)
                step_acc.append(a / n if n else 0.0)
                step_tried.append(1.0 if n else 0.0)
            if it < mcmc.warmup and (it + 1) % ADAPT_EVERY == 0:
                fixed_adapter.adapt()
                level_adapter.adapt()
            elif it >= mcmc.warmup:
                kept_accept += np.asarray(step_acc)
                kept_tried += np.asarray(step_tried)
        with _block(state, chain, it, "variances"):
            _draw_variances(spec, state, rng)

        if it >= mcmc.warmup and (it - mcmc.warmup) % mcmc.thin == 0:
            alpha_out[saved] = state.alpha
            for lv in spec.levels:
                effects_out[lv.name][saved] = state.effects[lv.name]
                cov_out[lv.name][saved] = state.cov[lv.name]
            iterations[saved] = it
            saved += 1
        if total >= 4 and (it + 1) % (total // 4) == 0:
            logger.debug("Chain %d: iteration %d/%d", chain, it + 1, total)

    names = ["fixed", *(lv.name for lv in spec.levels)]
    if mcmc.method == "polya-gamma":
        acceptance = {name: 1.0 for name in names}
    else:
        acceptance = {
            name: float(kept_accept[k] / kept_tried[k]) if kept_tried[k] else float("nan")
            for k, name in enumerate(names)
        }
    return _ChainOutput(alpha=alpha_out, effects=effects_out, cov=cov_out, iteration=iterations, acceptance=acceptance)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def fit(spec: ModelSpec, dataset: Dataset, mcmc: McmcConfig, seed: int) -> FitResult:
    """Run ``mcmc.chains`` independent chains and evaluate every retained draw's risks.

    Each chain gets its own child of ``SeedSequence(seed)``, so results do not depend
    on how many worker processes run the chains.
    """

    data = spec.prepare(dataset)
    children = np.random.SeedSequence(seed).spawn(mcmc.chains)
    tasks = [_ChainTask(spec=spec, data=data, mcmc=mcmc, seed=children[c], chain=c) for c in range(mcmc.chains)]
    workers = min(mcmc.workers, mcmc.chains)
    logger.info(
        "Fitting %d births, %d fixed effects: %d chain(s) on %d worker(s)",
        data.n, spec.design.n_columns, mcmc.chains, workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_chain, tasks))
    else:
        outputs = [_run_chain(task) for task in tasks]

    draws = ParameterDraws(
        alpha=np.concatenate([o.alpha for o in outputs]),
        effects={lv.name: np.concatenate([o.effects[lv.name] for o in outputs]) for lv in spec.levels},
        cov={lv.name: np.concatenate([o.cov[lv.name] for o in outputs]) for lv in spec.levels},
        chain=np.repeat(np.arange(mcmc.chains), mcmc.draws),
        iteration=np.concatenate([o.iteration for o in outputs]),
        column_names=spec.design.column_names,
        unit_labels=dict(data.unit_labels),
    )
    acceptance = {
        name: float(np.nanmean([o.acceptance[name] for o in outputs])) for name in outputs[0].acceptance
    }
    diagnostics = compute_diagnostics(draws, mcmc.chains, mcmc.method, acceptance)
    risks = PosteriorRisks(
        values=predict_risks(spec, draws, dataset),
        chain=draws.chain.copy(),
        iteration=draws.iteration.copy(),
        dataset_hash=dataset.content_hash(),
    )
    logger.info("Fit finished: %d draws, max R-hat %.3f", draws.n_draws, diagnostics.max_rhat)
    return FitResult(spec=spec, dataset=dataset, draws=draws, risks=risks, diagnostics=diagnostics)


def save_fit(result: FitResult, directory: Path, *, csv: bool = False, comment: Optional[str] = None) -> List[Path]:
    directory = Path(directory)
    written = save_posterior(result.risks, directory, csv=csv, comment=comment)
    written.append(save_parameters(result.draws, directory / PARAMETERS_NAME))
    design_path = directory / DESIGN_NAME
    design_path.write_text(json.dumps(result.spec.to_dict(), indent=2) + "\n", encoding="utf-8")
    diagnostics_path = directory / DIAGNOSTICS_NAME
    diagnostics_path.write_text(json.dumps(result.diagnostics.to_dict(), indent=2) + "\n", encoding="utf-8")
    return written + [design_path, diagnostics_path]


def load_fit(directory: Path, dataset: Dataset) -> FitResult:
    """Reload a saved fit for the dataset it was fitted to."""

    directory = Path(directory)
    spec = ModelSpec.from_dict(json.loads((directory / DESIGN_NAME).read_text(encoding="utf-8")))
    diagnostics = FitDiagnostics.from_dict(json.loads((directory / DIAGNOSTICS_NAME).read_text(encoding="utf-8")))
    risks = load_posterior(directory, expected_hash=dataset.content_hash())
    draws = load_parameters(directory / PARAMETERS_NAME)
    return FitResult(spec=spec, dataset=dataset, draws=draws, risks=risks, diagnostics=diagnostics)
