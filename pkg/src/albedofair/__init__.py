"""Fair facial albedo estimation under unknown spherical-harmonics lighting.

Subpackages / modules
---------------------
colorimetry       sRGB/linear/Lab conversions, ITA, skin-type classes, ITA errors
sh_lighting       real SH basis (3 bands), shading, intensity/direction split
albedo_model      PCA albedo model over UV maps
textures          procedural, skin-type balanced albedo library
rasterizer        weak-perspective triangle rasterizer, G-buffers, UV warp
losses            photometric / scene-consistency / supervision losses with gradients
inverse_renderer  per-scene joint fit of shared intensity, SH directions and albedo
benchmark         balanced dataset generation, evaluation and reporting
"""

__version__ = "0.1.0"
