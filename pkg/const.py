"""Stores constants."""
# Top-level case sections
NAME = "name"
BASE_MVA = "base_mva"
MATPOWER_SOURCE = "matpower_source"
BUSES = "buses"
LINES = "lines"
SYNC_GENS = "sync_gens"
GFM_UNITS = "gfm_units"
GFL_IBGS = "gfl_ibgs"
SHUNT_DEVICES = "shunt_devices"
FREQUENCY = "frequency"
COSTS = "costs"
PROFILE = "profile"

# Bus
BUS_ID = "id"
V_MIN = "v_min"
V_MAX = "v_max"
P_LOAD_MW = "p_load_mw"
Q_LOAD_MVAR = "q_load_mvar"
REFERENCE = "reference"

# Line
FROM_BUS = "from"
TO_BUS = "to"
R = "r"
X = "x"
B_SH = "b_sh"
RATING_MVA = "rating_mva"

# Devices
BUS = "bus"
DEVICE_NAME = "name"
P_MIN_MW = "p_min_mw"
P_MAX_MW = "p_max_mw"
Q_MIN_MVAR = "q_min_mvar"
Q_MAX_MVAR = "q_max_mvar"
COST_QUAD = "cost_quad"
COST_LIN = "cost_lin"
COST_NOLOAD = "cost_noload"
COST_STARTUP = "cost_startup"
MIN_UP = "min_up"
MIN_DOWN = "min_down"
RAMP_MW_PER_H = "ramp_mw_per_h"
X_TRANSIENT = "x_transient"
INERTIA_H = "inertia_h"
PFR_GAIN = "pfr_gain"
ALPHA_LEVELS = "alpha_levels"
S_MAX_MVA = "s_max_mva"
AVAILABLE_MW = "available_mw"
SI_CAPABLE = "si_capable"
H_SI_MAX = "h_si_max"
KIND = "kind"
Q_RATING_MVAR = "q_rating_mvar"
I_MAX = "i_max"

KIND_STATCOM = "statcom"
KIND_SYNCHRONOUS_CONDENSER = "synchronous_condenser"

# Frequency
DP_L_MW = "dp_l_mw"
DF_LIM_HZ = "df_lim_hz"
T_D = "t_d"
DAMPING_D = "damping_d"
ROCOF_MAX = "rocof_max"
F0_HZ = "f0_hz"

# Costs
SHED_COST = "shed_cost"

# Profile
HORIZON = "horizon"
LOAD_FACTOR = "load_factor"
QUANTILES = "quantiles"
BRANCHING_HOURS = "branching_hours"
MASS = "mass"
WIND_DEV = "wind"
LOAD_DEV = "load"

# Experiment documents
EXPERIMENT_CASE = "case"
EXPERIMENT_MODES = "modes"
EXPERIMENT_SWEEP = "sweep"
SWEEP_AXIS = "axis"
SWEEP_VALUES = "values"
SWEEP_SITE_BUS = "site_bus"
SWEEP_SC_REACTANCE = "sc_machine_reactance"
EXPERIMENT_TREE = "tree"
START_HOUR = "start_hour"
EXPERIMENT_SOLVER = "solver"
EXPERIMENT_SURROGATE = "surrogate"
N_V = "n_v"
PRUNE_THRESHOLD = "prune_threshold"
EXPERIMENT_OUT = "out"
ROLLING_STEPS = "rolling_steps"

# Solver block
REL_GAP = "rel_gap"
NODE_LIMIT = "node_limit"
TIME_LIMIT = "time_limit"
THREADS = "threads"
INTEGRALITY_TOL = "integrality_tol"
BACKEND = "backend"
SINGLE_THREAD = "single_thread"
TRACE = "trace"

# Metrics table columns
COL_EXPERIMENT = "experiment"
COL_SWEEP_VALUE = "sweep_value"
COL_MODE = "mode"
COL_STATUS = "status"
COL_COST = "cost"
COL_VIOL = "viol_pct"
COL_VIOL_SURROGATE = "viol_surrogate_pct"
COL_CURTAIL = "curtail_mw"
COL_SHED = "shed_mw"
COL_FREQ_VIOL = "freq_viol_pct"
COL_NADIR_SLACK = "nadir_slack"
COL_ROCOF_SLACK = "rocof_slack"
COL_SOC_GAP_MEAN = "soc_gap_mean"
COL_SOC_GAP_MAX = "soc_gap_max"
COL_RANK1_MEAN = "rank1_mean"
COL_STRENGTH_REF = "strength_ref"
COL_STRENGTH_SCHED = "strength_sched"
COL_STATCOM_USAGE = "statcom_usage_mvar"
COL_REL_GAP = "rel_gap"
COL_BOUND = "bound"
COL_NODES = "nodes"
COL_WALL_TIME = "wall_time"
COL_ERROR = "error"
COL_VOLTAGE_PREFIX = "v_"
COL_GAMMA_PREFIX = "gamma_"
