"""Identification codes for discrete memoryless and broadcast channels.

Pool-and-bin identification codes, their exact and Monte Carlo error
evaluation, capacity and capacity-region computations, and a seeded sweep
harness.  All information quantities are in nats.
"""
from .channel import Bc2, Bc3, Dmc, Pmf, bsc, load_channel, noiseless, parse_channel, \
    product_bc, product_bc3, z_channel
from .id_bc import BcIdParams, avg_error_report_bc, build_bc_code, max_error_report_bc, validate_bc
from .id_dmc import BudgetError, IdParams, ParamError, build_dmc_code, check_G_mu, \
    error_report_dmc, validate_dmc
from .id_ext import Bc3IdParams, CmIdParams, FbIdParams, build_bc3_code, build_cm_code, \
    build_fb_code, build_transmission_code, evaluate_bc3, evaluate_cm, evaluate_fb, \
    fb_type_concentration_check
from .info import RegionQuery, capacity, mutual_information, region_membership
from .harness import ExperimentConfig, run_sweep, summarize

__version__ = "0.1.0"
