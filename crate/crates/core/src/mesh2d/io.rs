//! ASCII mesh files: header `d nv ne nb`, then `nv` lines `x y`, `ne` lines
//! `k v1 ... vk` and `nb` lines `va vb tag`. Indices are zero-based; blank
//! lines and text after `#` are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{FacetSide, Mesh2D, MeshError};

pub fn write_mesh(mesh: &Mesh2D) -> String {
    let boundary: Vec<_> = mesh
        .facets()
        .iter()
        .filter_map(|f| match f.side {
            FacetSide::Boundary { tag, .. } => Some((f.vertices, tag)),
            FacetSide::Interior { .. } => None,
        })
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "2 {} {} {}", mesh.vertices().len(), mesh.num_elements(), boundary.len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:.17e} {:.17e}", v[0], v[1]);
    }
    for cyc in mesh.elements() {
        let ids: Vec<String> = cyc.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} {}", cyc.len(), ids.join(" "));
    }
    for ([a, b], tag) in boundary {
        let _ = writeln!(out, "{a} {b} {tag}");
    }
    out
}

pub fn read_mesh(text: &str) -> Result<Mesh2D, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| MeshError::Parse { line: 0, message: format!("unexpected end of file, expected {what}") });

    fn numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>, MeshError> {
        text.split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| MeshError::Parse { line, message: format!("cannot parse '{t}'") }))
            .collect()
    }

    let (line, head) = next("header")?;
    let head: Vec<usize> = numbers(line, head)?;
    if head.len() != 4 {
        return Err(MeshError::Parse { line, message: "header must be 'd nv ne nb'".into() });
    }
    if head[0] != 2 {
        return Err(MeshError::Parse { line, message: format!("only d = 2 is supported, got {}", head[0]) });
    }
    let (nv, ne, nb) = (head[1], head[2], head[3]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = next("vertex")?;
        let xy: Vec<f64> = numbers(line, l)?;
        if xy.len() != 2 {
            return Err(MeshError::Parse { line, message: "vertex line must be 'x y'".into() });
        }
        vertices.push([xy[0], xy[1]]);
    }
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (line, l) = next("element")?;
        let ids: Vec<usize> = numbers(line, l)?;
        if ids.is_empty() || ids.len() != ids[0] + 1 {
            return Err(MeshError::Parse { line, message: "element line must be 'k v1 ... vk'".into() });
        }
        if ids[1..].iter().any(|&v| v >= nv) {
            return Err(MeshError::Parse { line, message: "vertex index out of range".into() });
        }
        elements.push(ids[1..].to_vec());
    }
    let mut tags = HashMap::new();
    for _ in 0..nb {
        let (line, l) = next("boundary tag")?;
        let t: Vec<usize> = numbers(line, l)?;
        if t.len() != 3 {
            return Err(MeshError::Parse { line, message: "boundary line must be 'va vb tag'".into() });
        }
        tags.insert((t[0], t[1]), t[2] as u32);
    }
    if let Some((line, _)) = lines.next() {
        return Err(MeshError::Parse { line, message: "trailing content".into() });
    }
    Mesh2D::new(vertices, elements, &tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh2d::{lshape_tri, unit_square_tri};

    #[test]
    fn round_trip() {
        for m in [unit_square_tri(3), lshape_tri(4).unwrap()] {
            let back = read_mesh(&write_mesh(&m)).unwrap();
            assert_eq!(back.vertices(), m.vertices());
            assert_eq!(back.elements(), m.elements());
            assert_eq!(back.facets(), m.facets());
        }
    }

    #[test]
    fn quad_mesh_from_text() {
        let text = "# two unit squares\n2 6 2 6\n0 0\n1 0\n2 0\n0 1\n1 1\n2 1\n4 0 1 4 3\n4 1 2 5 4\n0 1 1\n1 2 1\n2 5 2\n5 4 3\n4 3 3\n3 0 4\n";
        let m = read_mesh(text).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.facets().len(), 7);
        assert!((m.total_area() - 2.0).abs() < 1e-15);
        m.audit().unwrap();
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(read_mesh("3 0 0 0"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(read_mesh("2 1 0 0\n0 x"), Err(MeshError::Parse { line: 2, .. })));
        assert!(matches!(read_mesh("2 3 1 0\n0 0\n1 0\n0 1\n3 0 1"), Err(MeshError::Parse { line: 5, .. })));
        assert!(matches!(read_mesh("2 1 0 0"), Err(MeshError::Parse { .. })));
    }
}
