"""Selecting candidates from a noisy ranking when candidates may be busy."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    DegenerateError,
    ImpossibleStatusError,
    InvalidInputError,
    RankselError,
)
from .ranking_models import (  # noqa: E402
    CandidatePool,
    Explicit,
    GaussianRUM,
    Mallows,
    Ordering,
    PermutationTable,
    PlackettLuce,
    SuperstarDistribution,
)
from .strategies import (  # noqa: E402
    FollowRanking,
    KBusy,
    KFree,
    OracleRef,
    PairwiseVoteAlgo,
    SuperstarAlgo,
)
