##########################################################################################
#
# Script name: config.py
#
# Description: Static configuration, tolerances, and the regime taxonomy.
#
##########################################################################################

from dataclasses import dataclass


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************


@dataclass(frozen=True)
class RegimeInfo:
    order: int
    tag: str
    label: str
    description: str
    limit_process: str


REGIMES = [
    RegimeInfo(
        order=0,
        tag='R1_HeavyNoCenter',
        label='1) Heavy tail, no centering',
        description='alpha in (0,2), or alpha=2 with l(v) -> infinity.',
        limit_process='X1',
    ),
    RegimeInfo(
        order=1,
        tag='R1_HeavyCentered',
        label='2) Heavy tail, centered',
        description='alpha=2 with liminf l(v) < infinity; maxima of S_hat_k - mu*k.',
        limit_process='X1',
    ),
    RegimeInfo(
        order=2,
        tag='R2_Intermediate',
        label='3) Intermediate',
        description='alpha in (2,3), or alpha=3 with l(v)/log v -> infinity.',
        limit_process='X2',
    ),
    RegimeInfo(
        order=3,
        tag='R3_Gaussian',
        label='4) Gaussian',
        description='E[xi^3] < infinity, or alpha=3 with l(v)/log v -> 0.',
        limit_process='X3',
    ),
    RegimeInfo(
        order=4,
        tag='R4_Boundary',
        label='5) Boundary',
        description='P{xi > v} ~ A v^-3 log v.',
        limit_process='X4',
    ),
]

REGIME_BY_TAG = {regime.tag: regime for regime in REGIMES}

FAMILIES = ('pareto', 'pareto-log', 'gamma', 'exponential', 'lognormal')
GAMMA_FAMILIES = ('gamma', 'exponential')

LIMIT_PROCESSES = ('X1', 'X2', 'X3', 'X4')
INVERSE_PROCESSES = ('X1_inv', 'X2_inv', 'X3_inv', 'X4_inv')
MARGINAL_KINDS = LIMIT_PROCESSES + INVERSE_PROCESSES

PRM_TAGS = ('P1', 'P2', 'P3', 'P2_3')

# Numerics
ROOT_RTOL = 1e-10
ROOT_MAX_ITER = 200
ROOT_MAX_DOUBLINGS = 1000
NORMAL_QUANTILE_RTOL = 1e-13
NORMAL_QUANTILE_MAX_NEWTON = 50

# Statistics
CONFIDENCE = 0.99
DEFAULT_EPS = 1e-4
MAX_CAP_FRACTION = 1e-4
PRELIMIT_FINAL_KS = 0.1
PRELIMIT_SE_SLACK = 2.0
KOLMOGOROV_SD = 0.2603
LARGE_DEVIATION_RTOL = 0.1
INVERSE_WINDOW_TAIL = 1e-5

# Walk generation
MAX_DRAWS_PER_BLOCK = 1 << 20
FIRST_PASSAGE_EXTRA = 1000
FIRST_PASSAGE_CEILING = 1 << 22
VISITS_EXTRA = 100
VISITS_SPREAD = 8.0

# Ensembles
DEFAULT_CHUNK = 512
DEFAULT_SEED = 20250101
DEFAULT_GRID_POINTS = 200

# Environment variables
ENV_THREADS = 'DECOUPLED_WALKS_THREADS'
ENV_CHUNK = 'DECOUPLED_WALKS_CHUNK'
ENV_LOG_FILE = 'DECOUPLED_WALKS_LOG_FILE'
ENV_REPORT_RUNTIME = 'DECOUPLED_WALKS_REPORT_RUNTIME'
ENV_ACCEPTANCE = 'DECOUPLED_WALKS_ACCEPTANCE'
