"""Octree-based variational range data fusion."""

from ._octfusion import (
    Camera,
    Dataset,
    FusionParams,
    Intrinsics,
    Octree,
    TriMesh,
    VolumeDomain,
    build_octree,
    build_view_tsdf,
    fuse,
    load_dataset,
    look_at,
    make_sphere_dataset,
    marching_cubes,
    read_ply,
    render_sphere_depth,
    run_cli,
    sphere_diff,
    vertex_diff,
    write_ply,
)

__all__ = [
    "Camera",
    "Dataset",
    "FusionParams",
    "Intrinsics",
    "Octree",
    "TriMesh",
    "VolumeDomain",
    "build_octree",
    "build_view_tsdf",
    "fuse",
    "load_dataset",
    "look_at",
    "make_sphere_dataset",
    "marching_cubes",
    "read_ply",
    "render_sphere_depth",
    "run_cli",
    "sphere_diff",
    "vertex_diff",
    "write_ply",
]
