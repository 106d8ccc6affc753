use super::mesh::TriangleMesh;
use super::vec3::{Aabb, Vec3};
use crate::Result;

/// Rays with `t` values this close are considered tied; ties go to the lower face index.
pub const TIE_EPSILON: f64 = 1e-12;

/// Offset for secondary rays leaving a surface.
pub const SECONDARY_T_MIN: f64 = 1e-4;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalized(),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn inv_direction(&self) -> Vec3 {
        Vec3::new(1.0 / self.direction.x, 1.0 / self.direction.y, 1.0 / self.direction.z)
    }

    /// Parameter interval inside `bounds`, if any.
    pub fn clip(&self, bounds: &Aabb, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        bounds.intersect(self.origin, self.inv_direction(), t_min, t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    pub t_hit: f64,
    pub position: Vec3,
    /// Unit shading normal, flipped to face the ray origin.
    pub normal: Vec3,
    pub uv: [f64; 2],
    pub face_index: usize,
}

/// Möller–Trumbore; returns `(t, u, v)` with barycentrics of corners 1 and 2.
#[inline]
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(q) * inv_det, u, v))
}

#[inline]
fn better(t: f64, face: usize, best: Option<(f64, usize, f64, f64)>) -> bool {
    match best {
        None => true,
        Some((bt, bf, _, _)) => t < bt - TIE_EPSILON || ((t - bt).abs() <= TIE_EPSILON && face < bf),
    }
}

fn make_hit(mesh: &TriangleMesh, ray: &Ray, t: f64, face: usize, u: f64, v: f64) -> HitRecord {
    let f = &mesh.faces[face];
    let w = 1.0 - u - v;
    let [n0, n1, n2] = f.normals.map(|i| mesh.normals[i as usize]);
    let mut normal = (n0 * w + n1 * u + n2 * v).normalized();
    if normal.length_squared() == 0.0 {
        let [a, b, c] = mesh.triangle(face);
        normal = (b - a).cross(c - a).normalized();
    }
    if normal.dot(ray.direction) > 0.0 {
        normal = -normal;
    }
    let [t0, t1, t2] = f.uvs.map(|i| mesh.uvs[i as usize]);
    HitRecord {
        t_hit: t,
        position: ray.at(t),
        normal,
        uv: [
            t0[0] * w + t1[0] * u + t2[0] * v,
            t0[1] * w + t1[1] * u + t2[1] * v,
        ],
        face_index: face,
    }
}

/// Reference nearest-hit query over every triangle.
pub fn intersect_brute_force(mesh: &TriangleMesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<HitRecord> {
    let mut best = None;
    for face in 0..mesh.faces.len() {
        if let Some((t, u, v)) = intersect_triangle(ray, &mesh.triangle(face)) {
            if t >= t_min && t <= t_max && better(t, face, best) {
                best = Some((t, face, u, v));
            }
        }
    }
    best.map(|(t, f, u, v)| make_hit(mesh, ray, t, f, u, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BvhNode {
    Interior { bounds: Aabb, left: u32, right: u32 },
    Leaf { bounds: Aabb, start: u32, count: u32 },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Interior { bounds, .. } | BvhNode::Leaf { bounds, .. } => bounds,
        }
    }
}

/// Median-split bounding volume hierarchy over triangle centroids.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    face_order: Vec<u32>,
    triangles: Vec<[Vec3; 3]>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Bvh> {
        mesh.validate()?;
        let triangles: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let boxes: Vec<Aabb> = (0..mesh.faces.len()).map(|f| mesh.face_bounds(f)).collect();
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut face_order: Vec<u32> = (0..mesh.faces.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.faces.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut face_order, 0, &boxes, &centroids);
        Ok(Bvh {
            nodes,
            face_order,
            triangles,
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root_bounds(&self) -> Aabb {
        *self.nodes[0].bounds()
    }

    /// Faces stored in a leaf, in storage order.
    pub fn leaf_faces(&self, start: u32, count: u32) -> &[u32] {
        &self.face_order[start as usize..(start + count) as usize]
    }

    /// Nearest hit with `t ∈ [t_min, t_max]`; see [`TIE_EPSILON`] for ties.
    pub fn intersect_first(&self, mesh: &TriangleMesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<HitRecord> {
        let inv = ray.inv_direction();
        let mut best: Option<(f64, usize, f64, f64)> = None;
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let limit = best.map_or(t_max, |b| (b.0 + TIE_EPSILON).min(t_max));
            if node.bounds().intersect(ray.origin, inv, t_min, limit).is_none() {
                continue;
            }
            match *node {
                BvhNode::Leaf { start, count, .. } => {
                    for &face in self.leaf_faces(start, count) {
                        let face = face as usize;
                        if let Some((t, u, v)) = intersect_triangle(ray, &self.triangles[face]) {
                            if t >= t_min && t <= t_max && better(t, face, best) {
                                best = Some((t, face, u, v));
                            }
                        }
                    }
                }
                BvhNode::Interior { left, right, .. } => {
                    // Visit the nearer child first.
                    let dl = self.nodes[left as usize].bounds().intersect(ray.origin, inv, t_min, limit);
                    let dr = self.nodes[right as usize].bounds().intersect(ray.origin, inv, t_min, limit);
                    match (dl, dr) {
                        (Some(a), Some(b)) => {
                            let (near, far) = if a.0 <= b.0 { (left, right) } else { (right, left) };
                            stack[sp] = far;
                            stack[sp + 1] = near;
                            sp += 2;
                        }
                        (Some(_), None) => {
                            stack[sp] = left;
                            sp += 1;
                        }
                        (None, Some(_)) => {
                            stack[sp] = right;
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, f, u, v)| make_hit(mesh, ray, t, f, u, v))
    }
}

fn build_node(nodes: &mut Vec<BvhNode>, faces: &mut [u32], offset: usize, boxes: &[Aabb], centroids: &[Vec3]) -> u32 {
    let bounds = faces.iter().fold(Aabb::EMPTY, |b, &f| b.union(boxes[f as usize]));
    let index = nodes.len() as u32;
    if faces.len() <= LEAF_SIZE {
        nodes.push(BvhNode::Leaf {
            bounds,
            start: offset as u32,
            count: faces.len() as u32,
        });
        return index;
    }
    let mut cb = Aabb::EMPTY;
    for &f in faces.iter() {
        cb.grow(centroids[f as usize]);
    }
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = faces.len() / 2;
    faces.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    // Placeholder, patched once the children exist.
    nodes.push(BvhNode::Leaf {
        bounds,
        start: 0,
        count: 0,
    });
    let (lo, hi) = faces.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, boxes, centroids);
    let right = build_node(nodes, hi, offset + mid, boxes, centroids);
    nodes[index as usize] = BvhNode::Interior { bounds, left, right };
    index
}

/// A mesh with its acceleration structure.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> Result<Scene> {
        let bvh = Bvh::build(&mesh)?;
        Ok(Scene { mesh, bvh })
    }

    /// First hit from the ray origin onward.
    pub fn first_hit(&self, ray: &Ray) -> Option<HitRecord> {
        self.bvh.intersect_first(&self.mesh, ray, 0.0, f64::INFINITY)
    }
}
