//! Closed meshes centered on the origin, used as stand-in object models.

use crate::geometry::{TriangleMesh, Vec3};

pub fn cuboid(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriangleMesh::new(vertices, triangles).expect("cuboid is valid")
}

/// Cylinder along z with `segments` sides and capped ends.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let segments = segments.max(3);
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for i in 0..segments {
        let a = std::f64::consts::TAU * i as f64 / segments as f64;
        let (x, y) = (radius * a.cos(), radius * a.sin());
        vertices.push(Vec3::new(x, y, -h));
        vertices.push(Vec3::new(x, y, h));
    }
    let bottom = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -h));
    vertices.push(Vec3::new(0.0, 0.0, h));
    let top = bottom + 1;

    let mut triangles = Vec::with_capacity(4 * segments);
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        triangles.push([bottom, b1, b0]);
        triangles.push([top, t0, t1]);
    }
    TriangleMesh::new(vertices, triangles).expect("cylinder is valid")
}
