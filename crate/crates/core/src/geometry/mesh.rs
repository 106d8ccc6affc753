use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::vec3::{Aabb, Rgb, Vec3};
use crate::{Error, Result};

/// Row-major RGB texture, channels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    width: usize,
    height: usize,
    texels: Vec<Rgb>,
}

impl TextureImage {
    pub fn new(width: usize, height: usize, texels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::UnsupportedTexture(format!("empty texture {width}x{height}")));
        }
        if texels.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "texels vs width*height",
                left: texels.len(),
                right: width * height,
            });
        }
        let texels = texels.into_iter().map(|t| t.clamp(0.0, 1.0)).collect();
        Ok(TextureImage {
            width,
            height,
            texels,
        })
    }

    pub fn constant(rgb: Rgb) -> Self {
        TextureImage {
            width: 1,
            height: 1,
            texels: vec![rgb.clamp(0.0, 1.0)],
        }
    }

    /// Checkerboard with `cells`×`cells` squares, each `texels_per_cell` wide.
    pub fn checker(cells: usize, texels_per_cell: usize, a: Rgb, b: Rgb) -> Self {
        let cells = cells.max(1);
        let side = cells * texels_per_cell.max(1);
        let mut texels = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let parity = (x / texels_per_cell.max(1) + y / texels_per_cell.max(1)) % 2;
                texels.push(if parity == 0 { a } else { b });
            }
        }
        TextureImage {
            width: side,
            height: side,
            texels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texel(&self, x: usize, y: usize) -> Rgb {
        self.texels[y * self.width + x]
    }

    /// Bilinear lookup with repeat wrapping. `v = 0` is the bottom row, as in OBJ.
    pub fn sample(&self, uv: [f64; 2]) -> Rgb {
        let u = uv[0] - uv[0].floor();
        let v = uv[1] - uv[1].floor();
        let x = u * self.width as f64 - 0.5;
        let y = (1.0 - v) * self.height as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let wrap = |i: f64, n: usize| -> usize { (i as i64).rem_euclid(n as i64) as usize };
        let (xa, xb) = (wrap(x0, self.width), wrap(x0 + 1.0, self.width));
        let (ya, yb) = (wrap(y0, self.height), wrap(y0 + 1.0, self.height));
        let top = self.texel(xa, ya) * (1.0 - fx) + self.texel(xb, ya) * fx;
        let bottom = self.texel(xa, yb) * (1.0 - fx) + self.texel(xb, yb) * fx;
        (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
    }
}

/// Standalone texture lookup; see [`TextureImage::sample`].
pub fn sample_texture(texture: &TextureImage, uv: [f64; 2]) -> Rgb {
    texture.sample(uv)
}

/// One material per mesh: a base texture (a 1×1 texture for constant color).
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub base_texture: TextureImage,
}

impl MaterialSpec {
    pub fn constant(rgb: Rgb) -> Self {
        MaterialSpec {
            base_texture: TextureImage::constant(rgb),
        }
    }

    pub fn base_color(&self, uv: [f64; 2]) -> Rgb {
        self.base_texture.sample(uv)
    }
}

/// Separate position, normal and texture-coordinate indices per corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub vertices: [u32; 3],
    pub normals: [u32; 3],
    pub uvs: [u32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub faces: Vec<Face>,
    pub material: MaterialSpec,
}

impl TriangleMesh {
    /// Checks index ranges, unit normals and non-emptiness.
    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        for (i, f) in self.faces.iter().enumerate() {
            let bad = f.vertices.iter().any(|&v| v as usize >= self.vertices.len())
                || f.normals.iter().any(|&n| n as usize >= self.normals.len())
                || f.uvs.iter().any(|&t| t as usize >= self.uvs.len());
            if bad {
                return Err(Error::InvalidMesh(format!("face {i} has an out-of-range index")));
            }
        }
        if let Some(i) = self
            .normals
            .iter()
            .position(|n| (n.length() - 1.0).abs() > 1e-6)
        {
            return Err(Error::InvalidMesh(format!("normal {i} is not unit length")));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for v in &self.vertices {
            b.grow(*v);
        }
        b
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = &self.faces[face];
        f.vertices.map(|i| self.vertices[i as usize])
    }

    pub fn face_bounds(&self, face: usize) -> Aabb {
        let mut b = Aabb::EMPTY;
        for p in self.triangle(face) {
            b.grow(p);
        }
        b
    }
}

/// Uniformly rescales and recenters the mesh so its bounding box is centered
/// at the origin and its largest axis spans exactly [-1, 1].
pub fn normalize_mesh(mut mesh: TriangleMesh) -> Result<TriangleMesh> {
    let bounds = mesh.bounds();
    let largest = bounds.extent().max_element();
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::DegenerateExtent);
    }
    let center = bounds.center();
    let scale = 2.0 / largest;
    let snap = |orig: f64, mapped: f64, axis: usize| -> f64 {
        if bounds.extent()[axis] != largest {
            mapped
        } else if orig == bounds.min[axis] {
            -1.0
        } else if orig == bounds.max[axis] {
            1.0
        } else {
            mapped
        }
    };
    for v in &mut mesh.vertices {
        let m = (*v - center) * scale;
        *v = Vec3::new(snap(v.x, m.x, 0), snap(v.y, m.y, 1), snap(v.z, m.z, 2));
    }
    Ok(mesh)
}

/// Built-in procedural geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMeshKind {
    Cube,
    Icosphere(u32),
    TwoPlanes,
}

/// Built-in procedural textures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestTexture {
    Checker(usize),
    Constant([f64; 3]),
}

pub const CHECKER_LIGHT: Rgb = Vec3::new(0.92, 0.88, 0.80);
pub const CHECKER_DARK: Rgb = Vec3::new(0.16, 0.36, 0.62);

impl TestTexture {
    pub fn material(&self) -> MaterialSpec {
        match *self {
            TestTexture::Checker(n) => MaterialSpec {
                base_texture: TextureImage::checker(n, 8, CHECKER_LIGHT, CHECKER_DARK),
            },
            TestTexture::Constant(rgb) => MaterialSpec::constant(rgb.into()),
        }
    }
}

/// Watertight cube, icosphere, or a two-plane occlusion scene, all inside [-1, 1]³.
pub fn make_test_mesh(kind: TestMeshKind, texture: TestTexture) -> TriangleMesh {
    let material = texture.material();
    match kind {
        TestMeshKind::Cube => cube(material),
        TestMeshKind::Icosphere(subdiv) => icosphere(subdiv, material),
        TestMeshKind::TwoPlanes => two_planes(material),
    }
}

fn cube(material: MaterialSpec) -> TriangleMesh {
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            )
        })
        .collect();
    // Each side: outward normal and its four corners counter-clockwise seen from outside.
    let sides: [(Vec3, [u32; 4]); 6] = [
        (Vec3::new(-1.0, 0.0, 0.0), [0, 4, 6, 2]),
        (Vec3::new(1.0, 0.0, 0.0), [1, 3, 7, 5]),
        (Vec3::new(0.0, -1.0, 0.0), [0, 1, 5, 4]),
        (Vec3::new(0.0, 1.0, 0.0), [2, 6, 7, 3]),
        (Vec3::new(0.0, 0.0, -1.0), [0, 2, 3, 1]),
        (Vec3::new(0.0, 0.0, 1.0), [4, 5, 7, 6]),
    ];
    let uvs = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut normals = Vec::with_capacity(6);
    let mut faces = Vec::with_capacity(12);
    for (s, (n, q)) in sides.iter().enumerate() {
        normals.push(*n);
        let s = s as u32;
        faces.push(Face {
            vertices: [q[0], q[1], q[2]],
            normals: [s; 3],
            uvs: [0, 1, 2],
        });
        faces.push(Face {
            vertices: [q[0], q[2], q[3]],
            normals: [s; 3],
            uvs: [0, 2, 3],
        });
    }
    TriangleMesh {
        vertices,
        normals,
        uvs,
        faces,
        material,
    }
}

fn icosphere(subdiv: u32, material: MaterialSpec) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoints = std::collections::HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalized();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    // Renormalize in f64 so every vertex is at unit distance to rounding.
    for v in &mut vertices {
        *v = v.normalized();
    }
    let normals = vertices.clone();
    // Equirectangular UVs per corner, with the seam unwrapped per face.
    let mut uvs = Vec::with_capacity(tris.len() * 3);
    let mut faces = Vec::with_capacity(tris.len());
    for tri in &tris {
        let mut corner: [[f64; 2]; 3] = tri.map(|i| {
            let p = vertices[i as usize];
            [0.5 + p.z.atan2(p.x) / (2.0 * PI), 0.5 + p.y.clamp(-1.0, 1.0).asin() / PI]
        });
        let umax = corner.iter().map(|c| c[0]).fold(f64::MIN, f64::max);
        for c in &mut corner {
            if umax - c[0] > 0.5 {
                c[0] += 1.0;
            }
        }
        let base = uvs.len() as u32;
        uvs.extend_from_slice(&corner);
        faces.push(Face {
            vertices: *tri,
            normals: *tri,
            uvs: [base, base + 1, base + 2],
        });
    }
    TriangleMesh {
        vertices,
        normals,
        uvs,
        faces,
        material,
    }
}

fn two_planes(material: MaterialSpec) -> TriangleMesh {
    // Small front plane at z = 0.5 occluding part of a larger back plane at z = -0.5.
    let vertices = vec![
        Vec3::new(-0.5, -0.5, 0.5),
        Vec3::new(0.5, -0.5, 0.5),
        Vec3::new(0.5, 0.5, 0.5),
        Vec3::new(-0.5, 0.5, 0.5),
        Vec3::new(-1.0, -1.0, -0.5),
        Vec3::new(1.0, -1.0, -0.5),
        Vec3::new(1.0, 1.0, -0.5),
        Vec3::new(-1.0, 1.0, -0.5),
    ];
    let uvs = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let normals = vec![Vec3::Z];
    let quad = |q: [u32; 4]| {
        [
            Face {
                vertices: [q[0], q[1], q[2]],
                normals: [0; 3],
                uvs: [0, 1, 2],
            },
            Face {
                vertices: [q[0], q[2], q[3]],
                normals: [0; 3],
                uvs: [0, 2, 3],
            },
        ]
    };
    let mut faces = quad([0, 1, 2, 3]).to_vec();
    faces.extend(quad([4, 5, 6, 7]));
    TriangleMesh {
        vertices,
        normals,
        uvs,
        faces,
        material,
    }
}
