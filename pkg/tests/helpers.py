"""Shared builders for the tests."""

from caulklab.function_spaces import CompositionSpec, SmoothLayerSpec, make_composition

# kink -> affine -> centered kink; the adapter slot (layer 2) is affine
REFERENCE_LAYERS = (
    SmoothLayerSpec(2, 2, 2, 0.5, "kink"),
    SmoothLayerSpec(2, 2, 2, 2.0, "polynomial", degree=1),
    SmoothLayerSpec(2, 1, 2, 1.0, "kink", center=True),
)


def reference_target(seed: int = 11):
    return make_composition(CompositionSpec(REFERENCE_LAYERS, seed=seed))
