"""Coverage-guided fuzzing with a neural coverage surrogate and saliency-map input crafting."""

from advfuzz.kernels import IMPLEMENTATION
from advfuzz.orchestrator import CampaignConfig, run_campaign

__version__ = "0.1.0"

__all__ = ["CampaignConfig", "IMPLEMENTATION", "run_campaign", "__version__"]
