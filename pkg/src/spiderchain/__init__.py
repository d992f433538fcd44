"""Spectral analysis of birth-death chains on spider graphs.

The chain is treated as a block tridiagonal (quasi-birth-death) operator whose
matrix orthogonal polynomials, weight matrix and stochastic UL factorizations
are computed here, together with brute-force oracles to check them against.
"""

from .chain_model import (
    BlockTriple,
    LegRates,
    SpiderChain,
    SpiderParams,
    TruncatedOperator,
    blocks,
    load_params,
    potential,
    truncate,
    validate,
)
from .errors import SpiderChainError, ValidationError
from .factorization import DarbouxChain, FactorPair, darboux, geronimus_weight, thresholds, ul_factorize, verify_product
from .km_spectral import gram, km_block, matrix_polys
from .oracle import compare, power_block, simulate
from .quadrature import WeightMatrix, gauss_rule, integrate
from .spider_rw import RWParams, rw_atoms, rw_classify, rw_stieltjes, rw_thresholds, rw_weight
from .stieltjes import assemble_stieltjes, cf_limit, convergents, stieltjes_weight

__version__ = "0.1.0"
