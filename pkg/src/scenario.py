import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from src import config
from src.equilibrium import AllocationFn, Mandate, xi
from src.market_model import MarketParams, ParameterError, TypeDistribution, infimum_bid_for_risk_limit, validate_params


class ScenarioError(ValueError):
    """
    Raised for a scenario that cannot be used. Collects every problem found in one pass; each problem
    carries the line number (None when the key is missing altogether) and the section.key path.
    """

    def __init__(self, problems: List[Tuple[Optional[int], str, str]]):
        self.problems = list(problems)
        super().__init__("; ".join(self.format_problem(*problem) for problem in self.problems))

    @staticmethod
    def format_problem(line, key_path, message) -> str:
        where = f"line {line}: " if line is not None else ""
        return f"{where}{key_path}: {message}"


# (type, required) per key; types: float, int, str, bool, "floats", "strs"
SCHEMA = {
    "market":{
        "Theta":(float, True),
        "theta":(float, True),
        "n":(int, True),
        "exp_rs":(float, True),
        "r_f":(float, True),
        "r_bar":(float, True),
    },
    "mandate":{
        "c_ell":(float, True),
        "c_bar":(float, True),
        "c_star":(float, True),
        "lambda":(float, False),
        "r_ell":(float, False),
    },
    "allocation":{
        "slope":(float, False),
        "intercept":(float, False),
        "alpha_ell":(float, False),
        "alpha_star":(float, False),
    },
    "distribution":{
        "kind":(str, True),
        "c_params":("floats", True),
        "r_params":("floats", True),
    },
    "run":{
        "seed":(int, False),
        "replicates":(int, False),
        "grid":(int, False),
        "quadrature_nodes":(int, False),
        "mc_replicates":(int, False),
        "strategy":(str, False),
        "fixed_bid":(float, False),
        "foc_tol":(float, False),
        "gap_rel_tol":(float, False),
        "ode_analytic_tol":(float, False),
        "ode_fd_tol":(float, False),
        "second_order_tol":(float, False),
    },
    "output":{
        "directory":(str, False),
        "formats":("strs", False),
    },
    "sweep":{
        "axis":(str, True),
        "start":(float, True),
        "stop":(float, True),
        "count":(int, True),
        "hold_lambda_n":(bool, False),
    },
}
OPTIONAL_SECTIONS = ("allocation","run","output","sweep")


@dataclass(frozen=True)
class AllocationSpec:
    """
    Either slope (+ intercept) or the two anchor shares alpha_ell at c_ell and alpha_star at c_star.
    An empty spec is the identity rule.
    """
    slope: Optional[float] = None
    intercept: Optional[float] = None
    alpha_ell: Optional[float] = None
    alpha_star: Optional[float] = None

    def build(self, c_ell: float, c_star: float) -> AllocationFn:
        if self.alpha_ell is not None or self.alpha_star is not None:
            return AllocationFn.through_points(c_ell, self.alpha_ell, c_star, self.alpha_star)
        slope = 1.0 if self.slope is None else self.slope
        intercept = 0.0 if self.intercept is None else self.intercept
        return AllocationFn(slope = slope, intercept = intercept, c_lo = c_ell, c_hi = c_star)


@dataclass(frozen=True)
class RunSettings:
    seed: int = config.DEFAULT_SEED
    replicates: int = config.DEFAULT_REPLICATES
    grid: int = config.BEST_RESPONSE_GRID
    quadrature_nodes: int = config.QUADRATURE_NODES
    mc_replicates: int = config.MC_REPLICATES
    strategy: str = "equilibrium"
    fixed_bid: Optional[float] = None
    foc_tol: float = config.FOC_TOL
    gap_rel_tol: float = config.GAP_REL_TOL
    ode_analytic_tol: float = config.ODE_ANALYTIC_TOL
    ode_fd_tol: float = config.ODE_FD_TOL
    second_order_tol: float = config.SECOND_ORDER_TOL


@dataclass(frozen=True)
class OutputSettings:
    directory: Optional[str] = None
    formats: Tuple[str, ...] = ("csv",)

    def resolve_directory(self) -> Path:
        if self.directory is None:
            return config.RESULTS_DIR
        path = Path(self.directory)
        return path if path.is_absolute() else config.PROJECT_DIR / path


@dataclass(frozen=True)
class SweepSettings:
    axis: str
    start: float
    stop: float
    count: int
    hold_lambda_n: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    market: MarketParams
    mandate: Mandate
    allocation_spec: AllocationSpec
    distribution: TypeDistribution
    run: RunSettings = field(default_factory = RunSettings)
    output: OutputSettings = field(default_factory = OutputSettings)
    sweep: Optional[SweepSettings] = None
    lambda_given: Optional[float] = None
    r_ell_given: Optional[float] = None
    r_ell: float = math.nan
    warnings: Tuple[str, ...] = ()

    @property
    def allocation(self) -> AllocationFn:
        return self.mandate.allocation


def _convert(kind, raw: str):
    if kind is float:
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number '{raw}'")
        return value
    if kind is int:
        return int(raw)
    if kind is bool:
        lowered = raw.lower()
        if lowered not in ("true","false"):
            raise ValueError(f"expected true or false, got '{raw}'")
        return lowered == "true"
    if kind == "floats":
        return tuple(_convert(float, part.strip()) for part in raw.split(","))
    if kind == "strs":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def _tokenize(text: str, problems: list) -> dict:
    """
    Read section headers and key = value lines.
    @return: {section: {key: (value, line)}} with values already converted to their schema type
    """
    sections = {}
    current = None
    for number, raw_line in enumerate(text.splitlines(), start = 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SCHEMA:
                problems.append((number, current, f"unknown section; expected one of {sorted(SCHEMA)}"))
                current = None
                continue
            if current in sections:
                problems.append((number, current, "section appears twice"))
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            problems.append((number, current or "<top>", f"expected 'key = value', got '{line}'"))
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if current is None:
            problems.append((number, key, "key outside any known section"))
            continue
        key_path = f"{current}.{key}"
        if key not in SCHEMA[current]:
            problems.append((number, key_path, "unknown key"))
            continue
        if key in sections[current]:
            problems.append((number, key_path, "duplicate key"))
            continue
        kind, _ = SCHEMA[current][key]
        try:
            sections[current][key] = (_convert(kind, raw), number)
        except ValueError as err:
            type_name = kind if isinstance(kind, str) else kind.__name__
            problems.append((number, key_path, f"type mismatch, expected {type_name}: {err}"))
    return sections


def _missing(sections: dict) -> list:
    problems = []
    for section, keys in SCHEMA.items():
        if section in OPTIONAL_SECTIONS and section not in sections:
            continue
        present = sections.get(section, {})
        for key, (_, required) in keys.items():
            if required and key not in present:
                problems.append((None, f"{section}.{key}", "missing required key"))
    return problems


def _values(sections: dict, section: str) -> dict:
    return {key: value for key, (value, _) in sections.get(section, {}).items()}


def _line(sections: dict, section: str, key: str) -> Optional[int]:
    entry = sections.get(section, {}).get(key)
    return entry[1] if entry else None


def _resolve_lambda(sections: dict, p: MarketParams, problems: list) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """
    The infimum bid from whichever of lambda / r_ell was supplied, checking they agree when both were.
    @return: (lambda, supplied lambda, supplied r_ell)
    """
    mandate = _values(sections, "mandate")
    lam, r_ell = mandate.get("lambda"), mandate.get("r_ell")
    if lam is None and r_ell is None:
        problems.append((None, "mandate.lambda", "one of lambda or r_ell is required"))
        return None, None, None
    if r_ell is None:
        return lam, lam, None
    try:
        derived = infimum_bid_for_risk_limit(r_ell, p)
    except ParameterError as err:
        problems.append((_line(sections, "mandate", "r_ell"), "mandate.r_ell", str(err)))
        return None, lam, r_ell
    if lam is not None and abs(derived - lam) > config.LAMBDA_CONSISTENCY_TOL:
        problems.append((_line(sections, "mandate", "lambda"), "mandate.lambda",
                         f"inconsistent with r_ell={r_ell}: r_ell implies lambda={derived!r}, got {lam!r}"))
        return None, lam, r_ell
    return (lam if lam is not None else derived), lam, r_ell


def _scenario_warnings(p: MarketParams, r_ell: float) -> Tuple[str, ...]:
    warnings = []
    factor = xi(p)
    if not factor.holds:
        warnings.append(f"xi condition violated: xi={factor.value:.6g} ≥ 1/(lambda*n)={factor.bound:.6g}")
    if r_ell < p.r_f - config.ADMISSIBILITY_TOL:
        warnings.append(f"symmetric risk limit {r_ell:.6g} below the risk-free rate {p.r_f:.6g}")
    return tuple(warnings)


def parse_scenario(text: str) -> ScenarioConfig:
    """
    Parse and validate a scenario. Unknown keys, missing required keys, type mismatches and inconsistent
    parameters are all fatal; every problem is reported in one ScenarioError.
    @param text: the scenario file contents
    @return: the validated config, with lambda/r_ell derived from one another and warnings attached
    """
    problems = []
    sections = _tokenize(text, problems)
    problems.extend(_missing(sections))
    if problems:
        raise ScenarioError(problems)

    market = _values(sections, "market")
    mandate_values = _values(sections, "mandate")
    # lambda_min is settled below, once lambda / r_ell are reconciled
    p = MarketParams(lambda_min = math.nan, **market)

    lam, lambda_given, r_ell_given = _resolve_lambda(sections, p, problems)
    if problems:
        raise ScenarioError(problems)
    p = p.replace(lambda_min = lam)
    problems.extend((None, "market", message) for message in validate_params(p))
    if problems:
        raise ScenarioError(problems)

    allocation_spec = AllocationSpec(**_values(sections, "allocation"))
    try:
        allocation = allocation_spec.build(mandate_values["c_ell"], mandate_values["c_star"])
        mandate = Mandate(allocation = allocation, **{k: mandate_values[k] for k in ("c_ell","c_bar","c_star")})
    except ParameterError as err:
        raise ScenarioError([(None, "mandate", str(err))]) from err

    distribution_values = _values(sections, "distribution")
    try:
        distribution = TypeDistribution(**distribution_values)
    except ParameterError as err:
        raise ScenarioError([(_line(sections, "distribution", "kind"), "distribution", str(err))]) from err

    run = RunSettings(**_values(sections, "run"))
    output = OutputSettings(**_values(sections, "output"))
    unknown_formats = set(output.formats) - set(config.OUTPUT_FORMATS)
    if unknown_formats:
        raise ScenarioError([(_line(sections, "output", "formats"), "output.formats",
                              f"unsupported formats {sorted(unknown_formats)}; expected {config.OUTPUT_FORMATS}")])
    sweep = SweepSettings(**_values(sections, "sweep")) if "sweep" in sections else None

    r_ell = p.Theta - p.theta * p.n * p.lambda_min if r_ell_given is None else r_ell_given
    return ScenarioConfig(
        market = p,
        mandate = mandate,
        allocation_spec = allocation_spec,
        distribution = distribution,
        run = run,
        output = output,
        sweep = sweep,
        lambda_given = lambda_given,
        r_ell_given = r_ell_given,
        r_ell = r_ell,
        warnings = _scenario_warnings(p, r_ell),
    )


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize_scenario(scenario: ScenarioConfig) -> str:
    """
    Write a scenario back in the documented format; parse(serialize(x)) == x.
    lambda is written whenever it was supplied, otherwise r_ell.
    """
    p = scenario.market
    sections = {
        "market":{"Theta":p.Theta, "theta":p.theta, "n":p.n, "exp_rs":p.exp_rs, "r_f":p.r_f, "r_bar":p.r_bar},
        "mandate":{"c_ell":scenario.mandate.c_ell, "c_bar":scenario.mandate.c_bar, "c_star":scenario.mandate.c_star},
        "allocation":{k: v for k, v in vars(scenario.allocation_spec).items() if v is not None},
        "distribution":{"kind":scenario.distribution.kind, "c_params":scenario.distribution.c_params,
                        "r_params":scenario.distribution.r_params},
        "run":{k: v for k, v in vars(scenario.run).items() if v is not None},
        "output":{k: v for k, v in vars(scenario.output).items() if v is not None},
    }
    if scenario.lambda_given is not None:
        sections["mandate"]["lambda"] = scenario.lambda_given
    else:
        sections["mandate"]["r_ell"] = scenario.r_ell_given
    if scenario.sweep is not None:
        sections["sweep"] = dict(vars(scenario.sweep))

    lines = []
    for section, values in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_format(value)}" for key, value in values.items())
        lines.append("")
    return "\n".join(lines)


def resolve_scenario_path(name_or_path: str) -> Path:
    """A path as given, or a shipped scenario by name (with or without the .scenario suffix)."""
    path = Path(name_or_path)
    if path.exists():
        return path
    shipped = config.SCENARIO_DIR / (path.name if path.suffix == ".scenario" else f"{path.name}.scenario")
    if shipped.exists():
        return shipped
    raise ScenarioError([(None, "--scenario", f"no scenario file at '{name_or_path}' or '{shipped}'")])


def load_scenario(name_or_path: str) -> ScenarioConfig:
    return parse_scenario(resolve_scenario_path(name_or_path).read_text(encoding = "utf-8"))
