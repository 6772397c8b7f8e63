import numpy as np
import pytest

from albedofair.albedo_model import fit_pca
from albedofair.benchmark import GeneratorConfig, plan_dataset, render_scene
from albedofair.geometry import head_mesh
from albedofair.inverse_renderer import FaceObservation, SceneObservation
from albedofair.textures import balanced_library

SMALL_D = 32
SMALL_GEN = GeneratorConfig(crop_size=40, margin=6)


@pytest.fixture(scope="session")
def small_library():
    return balanced_library(4, d=SMALL_D, seed=11)


@pytest.fixture(scope="session")
def small_model(small_library):
    return fit_pca([s.uv_map for s in small_library], 12)


@pytest.fixture(scope="session")
def small_mesh():
    return head_mesh(20, 28)


def build_scenes(library, mesh, n_scenes, seed=0, cfg=SMALL_GEN, supervised=True):
    """In-memory scenes with their generator ground truth (light, subject maps)."""
    albedo = {s.name: s.uv_map for s in library}
    out = []
    for spec in plan_dataset(library, n_scenes, cfg, seed):
        image, bg, crops, gbuffers = render_scene(spec, albedo, mesh, cfg, seed)
        faces = [FaceObservation(crop, g, albedo[f.subject] if supervised else None,
                                 spec.light if supervised else None, f"{spec.scene_id}_f{k}")
                 for k, (f, crop, g) in enumerate(zip(spec.faces, crops, gbuffers))]
        obs = SceneObservation(faces, image, bg, spec.seed, spec.scene_id)
        out.append((obs, spec, [albedo[f.subject] for f in spec.faces]))
    return out


@pytest.fixture(scope="session")
def small_scenes(small_library, small_mesh):
    return build_scenes(small_library, small_mesh, 8, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
