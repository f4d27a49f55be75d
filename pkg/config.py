import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Worker Settings
# 0 means "one worker per CPU"; results never depend on this value
try:
    THREADS = int(os.getenv('URNLAB_THREADS', '0'))
except ValueError:
    print(f"Warning: Invalid URNLAB_THREADS value: {os.getenv('URNLAB_THREADS')}. Defaulting to 0.")
    THREADS = 0
if THREADS < 0:
    print(f"Warning: Negative URNLAB_THREADS value: {THREADS}. Defaulting to 0.")
    THREADS = 0

# Artifact Settings
OUTPUT_DIR = os.getenv('URNLAB_OUTPUT_DIR', 'artifacts')

# Logging Settings
LOG_LEVEL = os.getenv('URNLAB_LOG_LEVEL', 'INFO').upper()
if LOG_LEVEL not in ['DEBUG', 'INFO', 'WARNING', 'ERROR']:
    print(f"Warning: Invalid URNLAB_LOG_LEVEL value: {LOG_LEVEL}. Defaulting to INFO.")
    LOG_LEVEL = 'INFO'
LOG_FILE = os.getenv('URNLAB_LOG_FILE', 'urnlab.log')

# Numerical settings below define results and are deliberately not read from
# the environment: the same (config, seed) must give the same numbers everywhere.

# Trajectories per RNG block; block b of a stream draws from SeedSequence(seed, (stream, b))
BLOCK_SIZE = 4096

# Default number of drawings for the W estimators
DEFAULT_HORIZON = 2000

# Above this many drawings the exact DP switches to floating mode
FLOAT_MODE_THRESHOLD = 10_000
MASS_DEFICIT_TOLERANCE = 1e-12

# Smoothing transform diagnostics
CONTRACTION_ALLOWANCE = 0.05
NOISE_FLOOR_FACTOR = 3.0

# Characteristic function noise floor is CF_NOISE_FACTOR / sqrt(N)
CF_NOISE_FACTOR = 4.0

# Chi-square bins are merged until their expected count reaches this value
CHI_SQUARE_MIN_EXPECTED = 5.0

# Stream identifiers for the seeding contract
STREAMS = {
    'dt_chain': 1,
    'ct_chain': 2,
    'connexion_xi': 3,
    'fixpoint': 5,
    'transfer': 6,
    'dirichlet': 7,
    'diagonal_urn': 8,
    'forest': 9,
    'gamma_power': 10,
    'init_pools': 11,
    'resample': 12,
    'coupling': 13,
    'floor': 14,
}
