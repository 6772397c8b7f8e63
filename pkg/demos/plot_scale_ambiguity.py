"""
Why a single crop cannot tell skin tone from light
==================================================

A rendered face is albedo times shading. Dividing the albedo by ``s`` and
multiplying the light by ``s`` produces the same pixels, so a crop alone does
not pin down how dark the skin is. The scene around the faces does: every face
shares one light, and the backdrop says how bright that light is.

This demo renders one three-face scene, shows the exact ambiguity, then fits
it twice without any ground-truth supervision: once with the scene-level
mechanisms off, once with them on.
"""

import numpy as np

from albedofair.albedo_model import fit_pca
from albedofair.benchmark import GeneratorConfig, plan_dataset, render_scene
from albedofair.colorimetry import ita_error
from albedofair.geometry import head_mesh, skin_mask
from albedofair.inverse_renderer import (FaceObservation, OptimConfig, SceneObservation, demonstrate_ambiguity,
                                         fit_scene, predicted_albedo)
from albedofair.losses import LossWeights
from albedofair.rasterizer import warp
from albedofair.textures import balanced_library

d = 64
library = balanced_library(6, d=d, seed=0)
model = fit_pca([s.uv_map for s in library], 16)
mesh = head_mesh()
cfg = GeneratorConfig()
albedo = {s.name: s.uv_map for s in library}

spec = plan_dataset(library, 1, cfg, seed=3)[0]
image, background, crops, gbuffers = render_scene(spec, albedo, mesh, cfg, seed=3)
print("skin types in the scene:", [f.skin_type.name for f in spec.faces])

# %%
# The exact identity: scaled solutions fit the crop equally well.
face = FaceObservation(crops[0], gbuffers[0])
true_albedo_img = warp(albedo[spec.faces[0].subject], gbuffers[0])
for s in (0.5, 2.0, 3.7):
    rep = demonstrate_ambiguity(face, spec.light, s, albedo_img=true_albedo_img)
    print(f"s={s}: loss {rep.loss_original:.2e} vs {rep.loss_scaled:.2e}")

# %%
# Two unsupervised fits of the same scene.
faces = [FaceObservation(c, g, name=f"f{k}") for k, (c, g) in enumerate(zip(crops, gbuffers))]
obs = SceneObservation(faces, image, background, spec.seed)
mask = skin_mask(d)
unsup = LossWeights(supervised=False)
arms = {
    "crop only": OptimConfig(weights=unsup, share_intensity=False, use_scene_consistency=False, condition_init=False),
    "scene-aware": OptimConfig(weights=unsup),
}
for name, arm in arms.items():
    res = fit_scene(obs, model, arm)
    errs = [ita_error(p, albedo[f.subject], mask) for p, f in zip(predicted_albedo(model, res.variables), spec.faces)]
    est = res.variables.intensity().mean(axis=0)
    true = np.linalg.norm(spec.light, axis=1)
    print(f"{name:12s} ITA errors {np.round(errs, 1)}  light estimate / truth {np.round(est / true, 2)}")
