"""Monte Carlo study runner: data generation, method matrix, metrics, tables.

The study design: responses follow an exponential-mean model with a
two-component normal error mixture whose mean, mode and median differ, so
mean-, median- and mode-targeting estimators chase different true curves.
Covariates are observed through w = x + u with known normal measurement
error.  Six methods are compared on identical data per replication and
summarized by mean, bias and MSE against method-specific targets.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .estimators import Dataset, huber_fit, lse_fit, median_fit, modal_em
from .kernel import Bandwidth
from .model import exponential_model
from .simex import ExtrapolationError, SimexConfig, default_lambda_grid, simex_estimate

# Paper-order method columns.
METHODS = ("N-Mean", "S-Mean", "S-Huber", "S-Median", "S-Modal", "N-Modal")

_METHOD_ESTIMATOR = {
    "N-Mean": ("lse", False),
    "S-Mean": ("lse", True),
    "S-Huber": ("huber", True),
    "S-Median": ("median", True),
    "S-Modal": ("modal", True),
    "N-Modal": ("modal", False),
}


@dataclass(frozen=True)
class ErrorMixture:
    """Normal mixture for the regression error, as (weight, mean, sd) triples.

    The default mixture has mean 0 while its mode (1) and median (0.67)
    sit elsewhere; mode and median are stored as reference constants for
    target construction, not recomputed.
    """

    components: tuple[tuple[float, float, float], ...] = ((0.5, -1.0, 2.5), (0.5, 1.0, 0.5))
    mode: float = 1.0
    median: float = 0.67

    def __post_init__(self) -> None:
        weights = np.array([c[0] for c in self.components])
        sds = np.array([c[2] for c in self.components])
        if np.any(weights <= 0) or np.any(sds <= 0):
            raise ValueError("mixture weights and standard deviations must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to one")


def sample_mixture(mix: ErrorMixture, n: int, rand: np.random.Generator) -> np.ndarray:
    """n i.i.d. mixture draws: pick a component by weight, then a normal."""
    if n < 1:
        raise ValueError("n must be positive")
    weights = np.array([c[0] for c in mix.components])
    means = np.array([c[1] for c in mix.components])
    sds = np.array([c[2] for c in mix.components])
    cut = np.cumsum(weights)
    cut[-1] = 1.0  # guard against round-off at the top
    idx = np.searchsorted(cut, rand.random(n), side="right")
    z = rand.standard_normal(n)
    return means[idx] + sds[idx] * z


@dataclass(frozen=True)
class Scenario:
    """One cell of the study design."""

    n: int = 200
    sigma_u2: float = 0.01
    bandwidth_c: float = 0.8
    reps: int = 100
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    mixture: ErrorMixture = field(default_factory=ErrorMixture)

    def __post_init__(self) -> None:
        if self.n < 1 or self.reps < 1:
            raise ValueError("n and reps must be positive")
        if not self.sigma_u2 > 0:
            raise ValueError("sigma_u2 must be positive")
        if not self.bandwidth_c > 0:
            raise ValueError("bandwidth_c must be positive")

    def target(self, method: str) -> np.ndarray:
        """True (amplitude, rate) for the functional a method estimates.

        Mean methods chase (alpha, beta); the median method
        (alpha + median(eps) * gamma, beta); modal methods
        (alpha + mode(eps) * gamma, beta).
        """
        if method in ("N-Mean", "S-Mean", "S-Huber"):
            a = self.alpha
        elif method == "S-Median":
            a = self.alpha + self.mixture.median * self.gamma
        elif method in ("S-Modal", "N-Modal"):
            a = self.alpha + self.mixture.mode * self.gamma
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        return np.array([a, self.beta])


def generate_replication(
    scenario: Scenario, rep_index: int, master_seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one dataset (y, x_true, w) from keyed streams.

    x ~ U(0,1); y = alpha*exp(beta*x) + gamma*exp(beta*x)*eps with eps from
    the error mixture; w = x + u with u ~ N(0, sigma_u2).  Identical
    (master_seed, rep_index) always reproduce the identical triple.
    """
    n = scenario.n
    x = rng.stream(master_seed, rng.DOMAIN_DATA, rep_index, rng.DATA_X).random(n)
    eps = sample_mixture(
        scenario.mixture, n, rng.stream(master_seed, rng.DOMAIN_DATA, rep_index, rng.DATA_NOISE)
    )
    u = np.sqrt(scenario.sigma_u2) * rng.stream(
        master_seed, rng.DOMAIN_DATA, rep_index, rng.DATA_MEASUREMENT
    ).standard_normal(n)
    curve = scenario.alpha * np.exp(scenario.beta * x)
    y = curve + scenario.gamma * np.exp(scenario.beta * x) * eps
    return y, x, x + u


def simex_config_for(
    scenario: Scenario,
    *,
    lambda_points: int = 10,
    lambda_max: float = 2.0,
    n_pseudo: int = 50,
    extrapolant: str = "quadratic",
    seed: int = 0,
) -> SimexConfig:
    """SimexConfig matching a scenario's measurement-error variance."""
    return SimexConfig(
        sigma_u=scenario.sigma_u2,
        lambda_grid=default_lambda_grid(lambda_points, lambda_max),
        n_pseudo=n_pseudo,
        extrapolant=extrapolant,
        seed=seed,
    )


@dataclass
class ScenarioResult:
    """Per-method summary over replications, plus the raw per-rep estimates."""

    scenario: Scenario
    methods: tuple[str, ...]
    param_names: tuple[str, ...]
    targets: dict[str, np.ndarray]
    estimates: dict[str, np.ndarray]  # (reps, q), NaN rows where the method failed
    failed: dict[str, int]
    mean: dict[str, np.ndarray]
    bias: dict[str, np.ndarray]
    mse: dict[str, np.ndarray]


def _canonical_methods(methods) -> tuple[str, ...]:
    requested = set(methods)
    unknown = requested - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; expected among {METHODS}")
    return tuple(m for m in METHODS if m in requested)


def _run_methods_once(
    scenario: Scenario,
    methods: tuple[str, ...],
    config: SimexConfig,
    rep: int,
) -> dict[str, np.ndarray | None]:
    """All requested methods on one replication's shared (y, w)."""
    y, _, w = generate_replication(scenario, rep, config.seed)
    ds = Dataset(y, w)
    model = exponential_model()
    h = Bandwidth.from_rule(scenario.bandwidth_c, scenario.n)
    out: dict[str, np.ndarray | None] = {}
    for method in methods:
        estimator, uses_simex = _METHOD_ESTIMATOR[method]
        try:
            if uses_simex:
                theta, _, _ = simex_estimate(
                    estimator, ds, model, config,
                    h=h if estimator == "modal" else None,
                    replication=rep,
                )
                ok = bool(np.all(np.isfinite(theta)))
            elif estimator == "lse":
                res = lse_fit(model, ds)
                theta, ok = res.theta_hat, res.converged
            else:
                # Naive modal, by the study's procedure: EM from the plain
                # LSE start at bandwidth h (no annealed restart), the same
                # start the SIMEX engine hands its first lambda.
                theta, diag = modal_em(model, ds, h, theta0=lse_fit(model, ds).theta_hat)
                ok = diag.converged
        except (ValueError, ExtrapolationError, np.linalg.LinAlgError):
            theta, ok = None, False
        out[method] = theta if (ok and theta is not None and np.all(np.isfinite(theta))) else None
    return out


def run_scenario(
    scenario: Scenario,
    methods,
    config: SimexConfig,
    *,
    threads: int = 1,
    progress=None,
) -> ScenarioResult:
    """Run the requested methods over all replications and summarize.

    Every method within a replication sees the identical (y, w) arrays.
    A method failing on a replication is excluded for that method only and
    counted.  Replications are independent keyed tasks, so any ``threads``
    count produces the identical result; aggregation always happens in
    replication-index order.
    """
    methods = _canonical_methods(methods)
    if not methods:
        raise ValueError("at least one method is required")
    if not np.allclose(config.cov_u, np.array([[scenario.sigma_u2]])):
        raise ValueError("config.sigma_u does not match scenario.sigma_u2")

    reps = scenario.reps
    worker = lambda rep: _run_methods_once(scenario, methods, config, rep)  # noqa: E731
    results: list[dict[str, np.ndarray | None]] = [None] * reps  # type: ignore[list-item]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for rep, res in enumerate(pool.map(worker, range(reps))):
                results[rep] = res
                if progress is not None:
                    progress(rep + 1, reps)
    else:
        for rep in range(reps):
            results[rep] = worker(rep)
            if progress is not None:
                progress(rep + 1, reps)

    q = 2
    estimates = {m: np.full((reps, q), np.nan) for m in methods}
    for rep in range(reps):
        for m in methods:
            theta = results[rep][m]
            if theta is not None:
                estimates[m][rep] = theta

    targets, mean, bias, mse, failed = {}, {}, {}, {}, {}
    for m in methods:
        targets[m] = scenario.target(m)
        ok = np.all(np.isfinite(estimates[m]), axis=1)
        failed[m] = int(reps - ok.sum())
        if ok.any():
            est = estimates[m][ok]
            mean[m] = est.mean(axis=0)
            bias[m] = mean[m] - targets[m]
            # Population-form MSE, so mse = bias^2 + population variance exactly.
            mse[m] = np.mean((est - targets[m]) ** 2, axis=0)
        else:
            mean[m] = np.full(q, np.nan)
            bias[m] = np.full(q, np.nan)
            mse[m] = np.full(q, np.nan)

    return ScenarioResult(
        scenario=scenario,
        methods=methods,
        param_names=("alpha", "beta"),
        targets=targets,
        estimates=estimates,
        failed=failed,
        mean=mean,
        bias=bias,
        mse=mse,
    )


_STATS = ("mean", "bias", "mse")


def emit_table(result: ScenarioResult, fmt: str = "csv") -> str:
    """Render a summary table; csv is machine-readable, text mirrors the
    parameter-by-statistic arrangement with methods as columns."""
    if fmt == "csv":
        lines = ["parameter,statistic,method,value"]
        for k, pname in enumerate(result.param_names):
            for stat in _STATS:
                values = getattr(result, stat)
                for m in result.methods:
                    lines.append(f"{pname},{stat},{m},{float(values[m][k])!r}")
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}; expected 'csv' or 'text'")

    width = 10
    header = " " * 12 + "".join(f"{m:>{width}}" for m in result.methods)
    lines = [header]
    label = {"mean": "Mean", "bias": "Bias", "mse": "MSE"}
    for k, pname in enumerate(result.param_names):
        for si, stat in enumerate(_STATS):
            values = getattr(result, stat)
            row = f"{pname if si == 0 else '':<6}{label[stat]:<6}"
            row += "".join(f"{float(values[m][k]):>{width}.3f}" for m in result.methods)
            lines.append(row)
    failures = [f"{m}={result.failed[m]}" for m in result.methods if result.failed[m]]
    if failures:
        lines.append("failed replications: " + ", ".join(failures))
    return "\n".join(lines) + "\n"


# Scenario files: plain "key = value" text, '#' comments, one key per line.
_SCENARIO_KEYS = {
    "n": int,
    "sigma_u2": float,
    "bandwidth_c": float,
    "reps": int,
    "lambda_points": int,
    "lambda_max": float,
    "B": int,
    "extrapolant": str,
    "seed": int,
    "methods": str,
}

_SCENARIO_DEFAULTS = {
    "n": 200,
    "sigma_u2": 0.01,
    "bandwidth_c": 0.8,
    "reps": 100,
    "lambda_points": 10,
    "lambda_max": 2.0,
    "B": 50,
    "extrapolant": "quadratic",
    "seed": 0,
    "methods": ",".join(METHODS),
}


def parse_scenario_text(text: str) -> dict:
    """Parse scenario keys from text; unknown keys and bad values error."""
    keys = dict(_SCENARIO_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scenario line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCENARIO_KEYS:
            raise ValueError(f"scenario line {lineno}: unknown key {key!r}")
        try:
            keys[key] = _SCENARIO_KEYS[key](value)
        except ValueError as exc:
            raise ValueError(f"scenario line {lineno}: bad value for {key!r}: {value!r}") from exc
    return keys


def study_from_keys(keys: dict) -> tuple[Scenario, SimexConfig, tuple[str, ...]]:
    """Build (Scenario, SimexConfig, methods) from parsed scenario keys."""
    scenario = Scenario(
        n=keys["n"],
        sigma_u2=keys["sigma_u2"],
        bandwidth_c=keys["bandwidth_c"],
        reps=keys["reps"],
    )
    config = simex_config_for(
        scenario,
        lambda_points=keys["lambda_points"],
        lambda_max=keys["lambda_max"],
        n_pseudo=keys["B"],
        extrapolant=keys["extrapolant"],
        seed=keys["seed"],
    )
    methods = _canonical_methods(m.strip() for m in keys["methods"].split(",") if m.strip())
    return scenario, config, methods
