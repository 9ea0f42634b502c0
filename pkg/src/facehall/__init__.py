"""Face super-resolution with a training-face subspace prior.

The reconstruction alternates an exact frequency-domain data-fit solve with
l1 sparse coding over a dictionary of training faces, so the result is pulled
toward the span of faces of the subject it belongs to.  A 3D alignment
pipeline registers textured training meshes to the pose of the input before
the dictionaries are built, which keeps the method usable on non-frontal
inputs.
"""

__version__ = "0.1.0"

from .imagecore import (
    DegradationParams,
    DictionaryPair,
    FormatError,
    Image,
    Psf,
    bicubic_upscale,
    build_dictionary,
    devectorize,
    dictionary_io,
    image_io,
    read_manifest,
    to_grayscale,
    validate_pair,
    vectorize,
)
from .degrade import (
    blur_cyclic,
    blur_cyclic_adjoint,
    decimate,
    degrade,
    dense_operators,
    zero_interpolate,
)
from .freqsolve import (
    InternalConsistencyError,
    SpectralOperator,
    build_spectral,
    coset_fold,
    psf_to_otf,
    x_update,
    x_update_dense_oracle,
)
from .sparse import SolverOptions, SparseCode, lipschitz_estimate, soft_threshold, solve_l1
from .halluc import (
    HallucinationParams,
    HallucinationResult,
    classify_src,
    hallucinate,
    hallucinate_color,
    joint_objective,
    objective,
)
from .metrics import npr, psnr, ssim
from .align3d import (
    LandmarkSet,
    Mesh,
    Transform,
    build_aligned_dictionaries,
    compose,
    estimate_similarity,
    landmark_io,
    mesh_io,
    render_mesh,
    transform_mesh,
    validate_alignment,
)

__all__ = [
    "DegradationParams",
    "DictionaryPair",
    "FormatError",
    "Image",
    "Psf",
    "bicubic_upscale",
    "build_dictionary",
    "devectorize",
    "dictionary_io",
    "image_io",
    "read_manifest",
    "to_grayscale",
    "validate_pair",
    "vectorize",
    "blur_cyclic",
    "blur_cyclic_adjoint",
    "decimate",
    "degrade",
    "dense_operators",
    "zero_interpolate",
    "InternalConsistencyError",
    "SpectralOperator",
    "build_spectral",
    "coset_fold",
    "psf_to_otf",
    "x_update",
    "x_update_dense_oracle",
    "SolverOptions",
    "SparseCode",
    "lipschitz_estimate",
    "soft_threshold",
    "solve_l1",
    "HallucinationParams",
    "HallucinationResult",
    "classify_src",
    "hallucinate",
    "hallucinate_color",
    "joint_objective",
    "objective",
    "npr",
    "psnr",
    "ssim",
    "LandmarkSet",
    "Mesh",
    "Transform",
    "build_aligned_dictionaries",
    "compose",
    "estimate_similarity",
    "landmark_io",
    "mesh_io",
    "render_mesh",
    "transform_mesh",
    "validate_alignment",
]
