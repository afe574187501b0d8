"""Anatomy-guided tumor saliency estimation for grayscale ultrasound-style images."""

__version__ = "0.1.0"

from .anatomy import (
    AnatomyLabeling,
    LayerDecomposition,
    LayerFlag,
    classify_layer_flag,
    decompose_nc_layers,
    layer_valid,
    refine_layers,
)
from .config import PipelineConfig, load_config, parse_config
from .errors import ContractError, FormatError, GeometryError, TseError
from .ingest import Image, load_image, load_prob_map, save_image, save_prob_map
from .maps import (
    UnaryMaps,
    adaptive_center,
    background_map,
    boundary_connectivity,
    center_map,
    foreground_map,
    layer_weights,
)
from .optimizer import (
    EnergyParams,
    brute_force_solve,
    build_constraint,
    energy,
    energy_gradient,
    pairwise_weights,
    solve,
)
from .phantom import DistractorSpec, EllipseSpec, PhantomCase, generate_phantom
from .pipeline import run_on_arrays, run_saliency
from .superpixel import (
    RegionGraph,
    SuperpixelMap,
    SuperpixelParams,
    build_region_graph,
    regionize,
    segment,
)
