//! Scene and mesh files, plus the synthetic benchmark generator.

pub mod generate;
pub mod ply;
pub mod primitives;
pub mod rle;
pub mod scene;

use std::collections::BTreeMap;
use std::path::Path;

pub use generate::{degrade_mask, generate_benchmark, image_seed, BenchmarkConfig, PerturbationSpec};
pub use ply::{load_mesh, save_mesh};
pub use scene::{
    load_scene, save_scene, SceneRecord, StreamEstimate, PRIMARY_STREAM, SECONDARY_STREAM,
};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

/// Loads `<dir>/<class>.ply` for every requested class.
pub fn load_models<'a>(
    dir: impl AsRef<Path>,
    classes: impl IntoIterator<Item = &'a str>,
) -> Result<BTreeMap<String, TriangleMesh>> {
    let dir = dir.as_ref();
    let mut out = BTreeMap::new();
    for class in classes {
        if out.contains_key(class) {
            continue;
        }
        let path = dir.join(format!("{class}.ply"));
        if !path.is_file() {
            return Err(Error::MissingModel(class.to_string()));
        }
        out.insert(class.to_string(), load_mesh(&path)?);
    }
    Ok(out)
}

/// The two stand-in object models used by the demo benchmark.
pub fn demo_models() -> BTreeMap<String, TriangleMesh> {
    BTreeMap::from([
        ("box".to_string(), primitives::cuboid(0.08, 0.05, 0.03)),
        ("can".to_string(), primitives::cylinder(0.03, 0.09, 24)),
    ])
}
