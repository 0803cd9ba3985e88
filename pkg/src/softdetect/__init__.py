"""APP and max-log APP soft detection for bijective and non-bijective constellations."""

from .channel import AwgnChannel, snr_db_to_sigma2
from .coding import (
    Interleaver,
    IrccCodec,
    IrccSpec,
    RateAdapter,
    RscCode,
    assemble_ircc,
    bcjr_decode,
    encode,
)
from .constellation import (
    BitPriorSet,
    Constellation,
    ConstellationPoint,
    PriorAggregate,
    aggregate_log_priors,
    build_bijective,
    build_dsm_epa,
    map_bits,
    parse_constellation,
)
from .detector import (
    DetectorMode,
    Diagnostics,
    app_llr,
    detect,
    maxlog_bit_llr,
    maxlog_bitsym_llr,
    maxlog_sym_llr,
    maxstar,
    maxstar_reduce,
)
from .kernels import BACKEND

__version__ = "0.1.0"
