from .run_config import (
    HGTConfig,
    OptimizerConfig,
    RunConfig,
    SamplerConfig,
    ScheduleConfig,
    SynthConfig,
    TaskSpec,
)
from .seeds import derive_seed, make_rng
from .settings import Settings
