from pathlib import Path
import os

from dotenv import load_dotenv

load_dotenv()

# pathing
PROJECT_DIR = Path(__file__).resolve().parents[1]
SCENARIO_DIR = PROJECT_DIR / "scenarios"
RESULTS_DIR = Path(os.getenv("BOND_AUCTION_RESULTS_DIR", PROJECT_DIR / "results"))
RESULT_EXTENSIONS = (".csv",".jsonl",".png")
RESULT_STEMS = ("campaign","sweep","clear","equilibrium","yield","paper_example")
RESULT_STEM_PREFIXES = ("verify_",)

# execution
DEFAULT_SEED = 1
DEFAULT_REPLICATES = 1000
WORKERS = int(os.getenv("BOND_AUCTION_WORKERS", "1"))

# market defaults (decimal yields, never percent)
MIN_BIDDERS = 3
MIN_CLEARING_BIDS = 2

# numerical defaults
QUADRATURE_NODES = 32
QUADRATURE_PANELS = 8
MIN_QUADRATURE_NODES = 16
MC_REPLICATES = 20000
MIN_MC_REPLICATES = 10000
MC_CHUNK = 4096
FOC_STEP = 1e-4
SECOND_ORDER_STEP = 1e-3
ODE_FD_STEP = 1e-5
BEST_RESPONSE_GRID = 101
ODE_GRID = 1000

# tolerances
CONSERVATION_TOL = 1e-12
ADMISSIBILITY_TOL = 1e-12
LAMBDA_CONSISTENCY_TOL = 1e-12
FOC_TOL = 1e-6
GAP_REL_TOL = 1e-5
ODE_ANALYTIC_TOL = 1e-12
ODE_FD_TOL = 1e-6
SECOND_ORDER_TOL = 1e-4

# worked example as reported
WORKED_EXAMPLE = {
    "Theta":0.08,
    "theta_raw":0.34,
    "n":10,
    "exp_rs":0.04,
    "r_ell":0.046,
    "lambda":0.1,
    "c_ell":0.1,
    "alpha_ell":0.1,
    "alpha_star":0.148,
    "c_star":0.169,
    "reported_bid":0.0711,
    "reported_residual":0.28,
    "reported_stop_out":0.046,
    "bid_tol":5e-4,
    "residual_tol":0.01,
}

# output files
FLOAT_FORMAT = "%.17g"
CAMPAIGN_COLUMNS = ["replicate","seed","aggregate_demand","stop_out","issued"]
SWEEP_COLUMNS = ["axis_value","bid","stop_out","xi","flags"]
SUMMARY_QUANTILES = (0.05,0.25,0.5,0.75,0.95)
OUTPUT_FORMATS = ("csv","jsonl")

def campaign_path(directory: Path, fmt: str) -> Path:
    return Path(directory) / f"campaign.{fmt}"

def sweep_path(directory: Path, fmt: str) -> Path:
    return Path(directory) / f"sweep.{fmt}"
