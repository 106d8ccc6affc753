//! Triangle meshes, OBJ ingestion and first-hit ray queries.

mod bvh;
mod mesh;
mod obj;
mod vec3;

pub use bvh::{
    intersect_brute_force, intersect_triangle, Bvh, BvhNode, HitRecord, Ray, Scene, SECONDARY_T_MIN, TIE_EPSILON,
};
pub use mesh::{
    make_test_mesh, normalize_mesh, sample_texture, Face, MaterialSpec, TestMeshKind, TestTexture, TextureImage,
    TriangleMesh, CHECKER_DARK, CHECKER_LIGHT,
};
pub use obj::{load_mesh, load_texture};
pub use vec3::{Aabb, Rgb, Vec3};

/// First hit through the BVH; free-function form of [`Bvh::intersect_first`].
pub fn intersect_first(bvh: &Bvh, mesh: &TriangleMesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<HitRecord> {
    bvh.intersect_first(mesh, ray, t_min, t_max)
}

pub fn build_bvh(mesh: &TriangleMesh) -> crate::Result<Bvh> {
    Bvh::build(mesh)
}
