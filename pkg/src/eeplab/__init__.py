"""eeplab: a multi-asset American option laboratory.

Prices American options three independent ways (obstacle-problem PDE,
penalization, least-squares Monte Carlo) and verifies that the value equals
the European value plus the expected discounted integral of a closed-form
premium density over the exercise region.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    EeplabError,
    ExtrapolationError,
    NotPositiveDefiniteError,
    OracleInvalidError,
    PipelineError,
    SolverFailureError,
    UnsupportedDimensionError,
    ValidationError,
)
from .model import ModelParams, SpotPoint, exact_step, symmetric_sqrt
from .payoff import (
    FAMILIES,
    IndexCall,
    IndexPut,
    MaxCall,
    MinPut,
    MultiStrike,
    PayoffSpec,
    PowerProduct,
    density_oracle,
    evaluate,
    premium_density,
)
from .obstacle_pde import (
    ExerciseRegion,
    LogGrid,
    ValueSurface,
    build_grid,
    delta,
    exercise_region,
    solve_lcp,
    solve_penalized,
    value_at,
)
from .mc import (
    Estimate,
    PathBatch,
    StoppingRule,
    estimate_premium,
    longstaff_schwartz,
    premium_streamed,
    price_european,
    simulate_paths,
)
from .eep import DecompositionResult, convergence_study, decompose, snell_residual
from .config import RunConfig, from_dict, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
