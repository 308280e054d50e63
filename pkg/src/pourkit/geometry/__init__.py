from .camera import CameraModel, Ray, look_at, pixel_ray
from .clip import DEFAULT_FILL_TOL, HeightLookup, clip_below, fill_height, volume_below_plane
from .mesh import TriMesh, check_watertight, load_obj, mesh_volume, save_obj, signed_volume
from .raycast import Region, RegionMask, ViewGeometry, classify_pixels, intersect_rays, ray_first_hit

__all__ = [
    "CameraModel",
    "DEFAULT_FILL_TOL",
    "HeightLookup",
    "Ray",
    "Region",
    "RegionMask",
    "TriMesh",
    "ViewGeometry",
    "check_watertight",
    "classify_pixels",
    "clip_below",
    "fill_height",
    "intersect_rays",
    "load_obj",
    "look_at",
    "mesh_volume",
    "pixel_ray",
    "ray_first_hit",
    "save_obj",
    "signed_volume",
    "volume_below_plane",
]
