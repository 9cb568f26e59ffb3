"""adblend: blending sponsored and organic content under joint effects.

Externality-aware listwise allocation over mixed ad/organic tuples, a
virtual-bid composite objective with data-driven (utopia-point) tuning,
GSP and VCG payment computation, and a deterministic simulated-experiment
harness.
"""

from .allocator import (
    AllocationResult,
    VirtualBid,
    optimize_impression,
    rank_listwise,
    score_tuple,
)
from .core import (
    AdCandidate,
    CtrVector,
    Impression,
    MixedTuple,
    OrganicItem,
    PositionLayout,
    Slot,
    default_layout,
    generate_tuples,
    lift,
    read_impression_log,
    tuple_space_size,
    write_impression_log,
)
from .ctr import (
    CtrModel,
    InteractionTable,
    ListwisePredictor,
    PointwisePredictor,
    SyntheticJointModel,
    load_model_config,
    predict_listwise,
    predict_pointwise,
    save_model_config,
)
from .errors import (
    AdBlendError,
    ConfigError,
    NormalizationError,
    UndefinedLiftError,
    ValidationError,
    ZeroCtrError,
)
from .payments import AdPayment, PaymentSchedule, gsp_payments, vcg_payments
from .tuner import (
    FrontierPoint,
    SpsaHyperparams,
    TuneResult,
    UtopiaPoint,
    distance_to_utopia,
    frontier_point,
    golden_search,
    spsa,
    tune_virtual_bid,
    utopia_point,
)

__version__ = "0.1.0"
