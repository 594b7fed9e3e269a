from .base import (BaseGenerator, GeneratorRun, InsufficientSeeds, Scanlist, Technique,
                   check_addresses)
from .density import DensityFillUpGenerator, Region, density_fillup_generate, find_regions
from .entropy import EntropyModelGenerator, entropy_generate
from .external import import_external
from .partition import (ActivePartitionGenerator, PartitionTree, RegionNode, active_partition_step,
                        allocate, build_tree)
from .uniform import UniformRandomGenerator

__all__ = [
    "ActivePartitionGenerator", "BaseGenerator", "DensityFillUpGenerator", "EntropyModelGenerator",
    "GeneratorRun", "InsufficientSeeds", "PartitionTree", "Region", "RegionNode", "Scanlist",
    "Technique", "UniformRandomGenerator", "active_partition_step", "allocate", "build_tree",
    "check_addresses", "density_fillup_generate", "entropy_generate", "find_regions",
    "import_external",
]

GENERATORS = {
    Technique.DensityFillUp: DensityFillUpGenerator,
    Technique.EntropyModel: EntropyModelGenerator,
    Technique.ActivePartition: ActivePartitionGenerator,
    Technique.UniformRandom: UniformRandomGenerator,
}
