//! Wavefront OBJ + MTL ingestion.
//!
//! Supports `v`, `vt`, `vn`, `f` (with `v`, `v/vt`, `v//vn`, `v/vt/vn`
//! corners and negative relative indices), `mtllib` and `usemtl`. Polygons
//! are fan-triangulated. Only the first material referenced is used; its
//! `map_Kd` texture (PNG) wins over `Kd`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::mesh::{Face, MaterialSpec, TextureImage, TriangleMesh};
use super::vec3::{Rgb, Vec3};
use crate::{Error, Result};

const DEFAULT_COLOR: Rgb = Vec3::new(0.8, 0.8, 0.8);

#[derive(Clone, Copy)]
struct Corner {
    v: u32,
    vt: Option<u32>,
    vn: Option<u32>,
}

/// Loads an OBJ file, computing area-weighted vertex normals where the file
/// has none and falling back to a constant material without UVs.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut positions = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut normals = Vec::new();
    let mut polys: Vec<Vec<Corner>> = Vec::new();
    let mut mtllibs = Vec::new();
    let mut used_material: Option<String> = None;

    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" | "vn" => {
                let xs = parse_floats(&mut it, 3).map_err(|m| perr(lineno, m))?;
                let p = Vec3::new(xs[0], xs[1], xs[2]);
                if tag == "v" {
                    positions.push(p);
                } else {
                    normals.push(p);
                }
            }
            "vt" => {
                let xs = parse_floats(&mut it, 2).map_err(|m| perr(lineno, m))?;
                uvs.push([xs[0], xs[1]]);
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in it {
                    let c = parse_corner(tok, positions.len(), uvs.len(), normals.len())
                        .map_err(|m| perr(lineno, m))?;
                    poly.push(c);
                }
                if poly.len() < 3 {
                    return Err(perr(lineno, format!("face has {} corners", poly.len())));
                }
                polys.push(poly);
            }
            "mtllib" => mtllibs.extend(it.map(|s| dir.join(s))),
            "usemtl" => {
                if used_material.is_none() {
                    used_material = it.next().map(str::to_owned);
                }
            }
            _ => {}
        }
    }
    if polys.is_empty() {
        return Err(Error::InvalidMesh(format!("{}: no faces", path.display())));
    }

    let material = load_material(&mtllibs, used_material.as_deref())?;
    let has_uvs = !uvs.is_empty();
    if !has_uvs {
        uvs.push([0.0, 0.0]);
    }

    // Fan triangulation.
    let mut tri_corners: Vec<[Corner; 3]> = Vec::new();
    for poly in &polys {
        for k in 1..poly.len() - 1 {
            tri_corners.push([poly[0], poly[k], poly[k + 1]]);
        }
    }

    let needs_normals = tri_corners.iter().any(|t| t.iter().any(|c| c.vn.is_none()));
    let vertex_normal_base = normals.len() as u32;
    if needs_normals {
        let mut acc = vec![Vec3::ZERO; positions.len()];
        for t in &tri_corners {
            let [a, b, c] = t.map(|c| positions[c.v as usize]);
            // Unnormalized cross product weights by twice the triangle area.
            let n = (b - a).cross(c - a);
            for c in t {
                acc[c.v as usize] += n;
            }
        }
        normals.extend(acc.into_iter().map(|n| {
            let l = n.length();
            if l > 0.0 {
                n / l
            } else {
                Vec3::Y
            }
        }));
    }
    for n in &mut normals {
        let l = n.length();
        *n = if l > 0.0 { *n / l } else { Vec3::Y };
    }

    let faces = tri_corners
        .iter()
        .map(|t| Face {
            vertices: t.map(|c| c.v),
            normals: t.map(|c| c.vn.unwrap_or(vertex_normal_base + c.v)),
            uvs: t.map(|c| if has_uvs { c.vt.unwrap_or(0) } else { 0 }),
        })
        .collect();

    let mesh = TriangleMesh {
        vertices: positions,
        normals,
        uvs,
        faces,
        material,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn parse_floats<'a>(it: &mut impl Iterator<Item = &'a str>, n: usize) -> std::result::Result<Vec<f64>, String> {
    let xs: Vec<f64> = it
        .take(n)
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad number {s:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if xs.len() < n {
        return Err(format!("expected {n} components, found {}", xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err("non-finite component".into());
    }
    Ok(xs)
}

fn resolve_index(tok: &str, count: usize, what: &str) -> std::result::Result<u32, String> {
    let i: i64 = tok.parse().map_err(|_| format!("bad {what} index {tok:?}"))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return Err(format!("{what} index 0 is invalid"));
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(format!("{what} index {i} out of range (have {count})"));
    }
    Ok(resolved as u32)
}

fn parse_corner(tok: &str, nv: usize, nvt: usize, nvn: usize) -> std::result::Result<Corner, String> {
    let mut parts = tok.split('/');
    let v = resolve_index(parts.next().unwrap_or(""), nv, "vertex")?;
    let vt = match parts.next() {
        Some("") | None => None,
        Some(s) => Some(resolve_index(s, nvt, "texcoord")?),
    };
    let vn = match parts.next() {
        Some("") | None => None,
        Some(s) => Some(resolve_index(s, nvn, "normal")?),
    };
    if parts.next().is_some() {
        return Err(format!("malformed face corner {tok:?}"));
    }
    Ok(Corner { v, vt, vn })
}

fn load_material(mtllibs: &[PathBuf], wanted: Option<&str>) -> Result<MaterialSpec> {
    let mut materials: HashMap<String, (Option<Rgb>, Option<PathBuf>)> = HashMap::new();
    let mut order = Vec::new();
    for lib in mtllibs {
        let text = fs::read_to_string(lib).map_err(|e| Error::io(lib, e))?;
        let dir = lib.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            let Some(tag) = it.next() else { continue };
            match tag {
                "newmtl" => {
                    let name = it.next().unwrap_or("").to_owned();
                    order.push(name.clone());
                    materials.entry(name.clone()).or_default();
                    current = Some(name);
                }
                "Kd" => {
                    let xs = parse_floats(&mut it, 3).map_err(|msg| Error::Parse {
                        path: lib.clone(),
                        line: lineno + 1,
                        msg,
                    })?;
                    if let Some(m) = current.as_ref().and_then(|c| materials.get_mut(c)) {
                        m.0 = Some(Vec3::new(xs[0], xs[1], xs[2]).clamp(0.0, 1.0));
                    }
                }
                "map_Kd" => {
                    // Options such as `-s` are not supported; the file name is the last token.
                    if let (Some(file), Some(m)) = (it.last(), current.as_ref().and_then(|c| materials.get_mut(c))) {
                        m.1 = Some(dir.join(file));
                    }
                }
                _ => {}
            }
        }
    }
    let chosen = wanted
        .and_then(|w| materials.get(w))
        .or_else(|| order.first().and_then(|n| materials.get(n)));
    match chosen {
        Some((_, Some(tex))) => Ok(MaterialSpec {
            base_texture: load_texture(tex)?,
        }),
        Some((Some(kd), None)) => Ok(MaterialSpec::constant(*kd)),
        _ => Ok(MaterialSpec::constant(DEFAULT_COLOR)),
    }
}

/// Reads an 8-bit RGB/RGBA PNG as a texture; alpha is discarded.
pub fn load_texture(path: &Path) -> Result<TextureImage> {
    if !path.exists() {
        return Err(Error::TextureNotFound(path.to_path_buf()));
    }
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if !is_png {
        return Err(Error::UnsupportedTexture(path.display().to_string()));
    }
    let img = image::open(path)
        .map_err(|e| Error::UnsupportedTexture(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let texels = img
        .pixels()
        .map(|p| Vec3::new(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0))
        .collect();
    TextureImage::new(w as usize, h as usize, texels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces.len(), 1);
        assert_eq!(m.vertices.len(), 3);
        // Computed normal follows the counter-clockwise winding.
        for n in &m.normals {
            assert!((*n - Vec3::Z).length() < 1e-12);
        }
        assert_eq!(m.uvs, vec![[0.0, 0.0]]);
        assert_eq!(m.material, MaterialSpec::constant(DEFAULT_COLOR));
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "quad.obj",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n",
        );
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces.len(), 2);
        // Manual fan of the unit quad (0,1,2,3): (0,1,2) and (0,2,3).
        assert_eq!(m.faces[0].vertices, [0, 1, 2]);
        assert_eq!(m.faces[1].vertices, [0, 2, 3]);
        assert_eq!(m.faces[1].uvs, [0, 2, 3]);
        let area: f64 = (0..2)
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                (b - a).cross(c - a).length() / 2.0
            })
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_indices_and_slash_forms() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "rel.obj",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 -1\nf -3//-1 -2//-1 -1//-1\n",
        );
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces[0].vertices, [0, 1, 2]);
        assert_eq!(m.faces[0].normals, [0, 0, 0]);
        assert_eq!(m.normals[0], Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
        let err = load_mesh(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn malformed_face_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.obj", "v 0 0 0\nv 1 0 0\nf 1 2\n");
        assert!(matches!(load_mesh(&p), Err(Error::Parse { .. })));
        let p = write(dir.path(), "bad2.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 3\n");
        assert!(matches!(load_mesh(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_mesh("/nonexistent/x.obj"), Err(Error::Io { .. })));
    }

    #[test]
    fn missing_texture() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.mtl", "newmtl skin\nKd 1 0 0\nmap_Kd skin.png\n");
        let p = write(
            dir.path(),
            "t.obj",
            "mtllib m.mtl\nusemtl skin\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
        );
        let err = load_mesh(&p).unwrap_err();
        assert!(matches!(err, Error::TextureNotFound(_)));
        assert!(err.to_string().contains("texture not found"));
    }

    #[test]
    fn kd_and_png_texture() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.mtl", "newmtl red\nKd 1 0 0\n");
        let p = write(
            dir.path(),
            "t.obj",
            "mtllib m.mtl\nusemtl red\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
        );
        assert_eq!(load_mesh(&p).unwrap().material, MaterialSpec::constant(Vec3::X));

        let img = image::RgbaImage::from_pixel(2, 2, image::Rgba([255, 0, 255, 7]));
        img.save(dir.path().join("tex.png")).unwrap();
        write(dir.path(), "m2.mtl", "newmtl t\nKd 0 1 0\nmap_Kd tex.png\n");
        let p = write(
            dir.path(),
            "t2.obj",
            "mtllib m2.mtl\nusemtl t\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n",
        );
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.material.base_texture.width(), 2);
        assert_eq!(m.material.base_color([0.3, 0.3]), Vec3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn non_png_texture_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tex.tga", "xx");
        write(dir.path(), "m.mtl", "newmtl t\nmap_Kd tex.tga\n");
        let p = write(dir.path(), "t.obj", "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        assert!(matches!(load_mesh(&p), Err(Error::UnsupportedTexture(_))));
    }
}
