from pathlib import Path

ROOT_FILEPATH = Path(__file__).parent.parent
TESTS_FILEPATH = ROOT_FILEPATH / "tests"
TEST_RESOURCES_FILEPATH = TESTS_FILEPATH / "resources"
DEFAULT_OUTPUT_DIR = Path("choquard-out")

# Worker pool size for parameter sweeps
WORKERS_ENV_VAR = "CHOQUARD_WORKERS"

# Solver defaults
TOL_GRAD = 1e-6
TOL_POHOZAEV = 1e-3
ARMIJO_C = 1e-4
INITIAL_STEP = 1.0
MIN_STEP = 1e-12
MAX_ITER = 5000
ROOT_XTOL = 1e-12

# Excited candidates are distinct when both thresholds are cleared
DISTINCT_L2 = 1e-2
DISTINCT_ENERGY = 1e-6

# Nonlinearity checks
FD_SAMPLES = 64
FD_RTOL = 1e-4
PARITY_SAMPLES = 128
PARITY_RTOL = 1e-10
GROWTH_MARGIN = 0.01
SMALL_DECADES = (1e-8, 1e-4)
LARGE_DECADES = (1e4, 1e8)
SIGMA_FLOOR = 1e-12
QUOTIENT_CAP = 1e3

# Quadrature
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-11
QUAD_LIMIT = 400
GAUSS_ORDER = 8

# Dilation mass-loss tolerance
MASS_LOSS_RTOL = 1e-3

# Paths: subdivisions per face edge, fiber and dilation sampling
FACE_RESOLUTION = 8
FIBER_POINTS = 64
FIBER_OCTAVES = 48
THETA_OCTAVES = 32
THETA_DOUBLINGS = 60

# Exit codes
EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG_ERROR = 3
EXIT_HYPOTHESIS = 4

# Artifacts
SOLUTION_FILE = "solution.bin"
ENERGIES_FILE = "energies.csv"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.txt"
AUDIT_FILE = "audit.json"
KERNEL_FILE = "kernel.csv"
SCAN_FILE = "scan.csv"
PSP_FILE = "psp.csv"
INTERACTION_FILE = "interaction.csv"
FLOAT_FORMAT = "{:.17g}"

RUN_MODES = (
    "solve-fixed-mu",
    "solve-normalized",
    "excited",
    "path-audit",
    "riesz-kernel",
    "asymptotics",
    "pohozaev-audit",
    "check-growth",
)
