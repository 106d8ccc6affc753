//! Analytic radiance fields derived from textured triangle meshes.
//!
//! A mesh plus a point light defines, for every camera ray, a ground-truth
//! occupancy alpha at each sample (opaque inside a thin band around the
//! first surface hit) and a constant Phong color. From that field the crate
//! can render images by discrete volume rendering, bake per-ray supervision
//! datasets, and fit small neural radiance fields either directly against
//! the per-sample targets or classically against rendered pixels.
//!
//! The pipeline, bottom-up:
//!
//! * [`geometry`]: meshes, OBJ loading, BVH first-hit queries.
//! * [`shading`]: Phong reflection at a hit.
//! * [`field`]: per-sample ground-truth alpha and color along a ray.
//! * [`sampling`]: sample placement along rays and camera spheres.
//! * [`render`]: cameras, compositing, analytic and learned renders, image files.
//! * [`supervision`]: dataset baking and the training losses.
//! * [`model`]: frequency-MLP and feature-grid fields, Adam, 1cycle, training.
//! * [`metrics`]: PSNR and SSIM.
//! * [`commands`]: the end-to-end runs behind the `meshrf` binary.

pub mod commands;
pub mod error;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod render;
pub mod sampling;
pub mod shading;
pub mod supervision;

pub use error::{Error, Result};
pub use geometry::{Bvh, HitRecord, Ray, Rgb, Scene, TriangleMesh, Vec3};
