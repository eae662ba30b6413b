//! ASCII PLY subset: a `vertex` element with float `x`, `y`, `z` properties
//! (other properties are ignored) and a `face` element whose first property
//! is a list of exactly three vertex indices. Units are meters.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

enum Property {
    Scalar(String),
    List,
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text, &path.display().to_string())
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_ply(mesh)).map_err(|e| Error::io(path, e))
}

pub fn write_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices().len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(s, "element face {}", mesh.triangles().len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn parse_ply(text: &str, source: &str) -> Result<TriangleMesh> {
    let err = |line: usize, message: String| Error::Ply {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing `ply` magic".into())),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut header_done = false;
    let mut format_seen = false;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(err(n, "only `format ascii 1.0` is supported".into()));
                }
                format_seen = true;
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| err(n, "element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(n, "element without a valid count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(n, "property before any element".into()))?;
                let parts: Vec<&str> = tok.collect();
                let prop = match parts.as_slice() {
                    ["list", _, _, _] => Property::List,
                    [_, name] => Property::Scalar(name.to_string()),
                    _ => return Err(err(n, format!("malformed property `{line}`"))),
                };
                el.properties.push(prop);
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(err(n, format!("unexpected header keyword `{other}`"))),
        }
    }
    if !header_done {
        return Err(err(0, "file ended before `end_header`".into()));
    }
    if !format_seen {
        return Err(err(0, "missing `format` line".into()));
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut last_line = 0;
    for el in &elements {
        let scalar_index = |name: &str| {
            el.properties
                .iter()
                .position(|p| matches!(p, Property::Scalar(s) if s == name))
        };
        let xyz = if el.name == "vertex" {
            match (scalar_index("x"), scalar_index("y"), scalar_index("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(err(0, "vertex element needs x, y and z properties".into())),
            }
        } else {
            None
        };
        if el.name == "face" && !matches!(el.properties.first(), Some(Property::List)) {
            return Err(err(0, "face element must start with a list property".into()));
        }
        for _ in 0..el.count {
            let Some((n, line)) = lines.next() else {
                return Err(err(
                    last_line + 1,
                    format!("unexpected end of file inside `{}` element", el.name),
                ));
            };
            last_line = n;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if let Some([x, y, z]) = xyz {
                if tokens.len() < el.properties.len() {
                    return Err(err(n, format!(
                        "expected {} vertex values, found {}",
                        el.properties.len(),
                        tokens.len()
                    )));
                }
                let parse = |i: usize| -> Result<f64> {
                    tokens[i]
                        .parse::<f64>()
                        .map_err(|_| err(n, format!("invalid number `{}`", tokens[i])))
                };
                vertices.push(Vec3::new(parse(x)?, parse(y)?, parse(z)?));
            } else if el.name == "face" {
                let ints: Vec<usize> = tokens
                    .iter()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(n, format!("invalid face line `{line}`")))?;
                match ints.as_slice() {
                    [3, a, b, c, ..] => triangles.push([*a, *b, *c]),
                    [k, ..] => return Err(err(n, format!("face has {k} indices, only triangles are supported"))),
                    [] => return Err(err(n, "empty face line".into())),
                }
            }
        }
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(err(0, "no vertex element".into()));
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| err(last_line, e.to_string()))
}
