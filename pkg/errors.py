"""Error keys, one per distinct failure.

Tests assert on these keys instead of formatted messages, and diagnostics carry them so
sweep results can be grouped by cause. Each key is prefixed by the module that raises it:

GC = grid_case
CP = case_parser
SP = section_parsers
MI = matpower_import
AD = admittance
SU = surrogate
SC = scenario
IR = conic_program
FO = formulation
SO = solver
EV = evaluate
PA = case_patches
EX = experiments
UT = utils
"""

# Error Keys
GC_BAD_BASE_MVA = "gc_bad_base_mva"
GC_BAD_VOLTAGE_BOUNDS = "gc_bad_voltage_bounds"
GC_DUPLICATE_BUS = "gc_duplicate_bus"
GC_MULTIPLE_REFERENCE_BUSES = "gc_multiple_reference_buses"
GC_BAD_LINE = "gc_bad_line"
GC_DANGLING_BUS_REF = "gc_dangling_bus_ref"
GC_BAD_SYNC_GEN = "gc_bad_sync_gen"
GC_BAD_GFM_UNIT = "gc_bad_gfm_unit"
GC_BAD_GFL_IBG = "gc_bad_gfl_ibg"
GC_BAD_SHUNT_DEVICE = "gc_bad_shunt_device"
GC_BAD_FREQUENCY_PARAMS = "gc_bad_frequency_params"
GC_FREQUENCY_NOT_REAL = "gc_frequency_not_real"
GC_DISCONNECTED = "gc_disconnected"
GC_BAD_COSTS = "gc_bad_costs"
GC_BAD_PROFILE = "gc_bad_profile"
CP_PATH_DOES_NOT_EXIST = "cp_path_does_not_exist"
CP_NOT_A_MAPPING = "cp_not_a_mapping"
CP_UNKNOWN_SECTION = "cp_unknown_section"
CP_MISSING_SECTION = "cp_missing_section"
CP_NO_PARSER_FUNC_MAP = "cp_no_parser_func_map"
SP_MISSING_FIELDS = "sp_missing_fields"
SP_BAD_FIELD_TYPE = "sp_bad_field_type"
SP_BAD_SECTION_TYPE = "sp_bad_section_type"
SP_INVALID_DEVICE_KIND = "sp_invalid_device_kind"
MI_PATH_DOES_NOT_EXIST = "mi_path_does_not_exist"
MI_MISSING_TABLE = "mi_missing_table"
MI_BAD_ROW = "mi_bad_row"
AD_SINGULAR = "ad_singular"
AD_ILL_CONDITIONED = "ad_ill_conditioned"
AD_BAD_CONFIG = "ad_bad_config"
SU_EMPTY_DATASET = "su_empty_dataset"
SU_CONSTANT_FEATURES = "su_constant_features"
SU_RANK_DEFICIENT = "su_rank_deficient"
SU_DIMENSION_MISMATCH = "su_dimension_mismatch"
SU_BAD_LEVELS = "su_bad_levels"
SU_UNKNOWN_TARGET = "su_unknown_target"
SU_BAD_MODEL_FILE = "su_bad_model_file"
SC_EMPTY_QUANTILES = "sc_empty_quantiles"
SC_BAD_MASSES = "sc_bad_masses"
SC_NEGATIVE_REALIZATION = "sc_negative_realization"
SC_BAD_BRANCHING_HOURS = "sc_bad_branching_hours"
SC_UNKNOWN_NODE = "sc_unknown_node"
SC_PROFILE_TOO_SHORT = "sc_profile_too_short"
IR_UNKNOWN_VARIABLE = "ir_unknown_variable"
IR_DUPLICATE_VARIABLE = "ir_duplicate_variable"
IR_BAD_BOUNDS = "ir_bad_bounds"
IR_NEGATIVE_QUADRATIC = "ir_negative_quadratic"
IR_EMPTY_CONE = "ir_empty_cone"
FO_MISSING_SURROGATE = "fo_missing_surrogate"
FO_FLEET_MISMATCH = "fo_fleet_mismatch"
FO_UNBOUNDED_FACTOR = "fo_unbounded_factor"
FO_DUPLICATE_HANDLE = "fo_duplicate_handle"
FO_UNKNOWN_HANDLE = "fo_unknown_handle"
FO_WINDOW_TRUNCATED = "fo_window_truncated"
FO_MONOMIAL_DEGREE = "fo_monomial_degree"
FO_ALPHA_GRID_MISMATCH = "fo_alpha_grid_mismatch"
SO_DIMENSION_MISMATCH = "so_dimension_mismatch"
SO_UNKNOWN_BACKEND = "so_unknown_backend"
SO_NUMERIC_FAILURE = "so_numeric_failure"
EV_SINGULAR_CONFIG = "ev_singular_config"
EV_NEGATIVE_INPUT = "ev_negative_input"
PA_NO_DEVICE = "pa_no_device"
PA_BAD_VALUE = "pa_bad_value"
PA_NO_PATCH_FOR_AXIS = "pa_no_patch_for_axis"
EX_BAD_SPEC = "ex_bad_spec"
EX_UNSORTED_VALUES = "ex_unsorted_values"
EX_NO_MODES = "ex_no_modes"
EX_POINT_FAILED = "ex_point_failed"
EX_ROLLING_INFEASIBLE = "ex_rolling_infeasible"
EX_MISSING_COLUMN = "ex_missing_column"
EX_UNKNOWN_FIGURE = "ex_unknown_figure"
UT_PATH_DOES_NOT_EXIST = "ut_path_does_not_exist"


class ImpossibleStateException(BaseException):
    """Raised when internal bookkeeping reaches a state no valid input can produce."""

    pass
