//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use maskval::cli;
use maskval::dataset::load_mesh;
use maskval::ensemble::add_disagreement;
use maskval::geometry::{CameraIntrinsics, ModelPoints, Pose, TriangleMesh, Vec3};
use maskval::maskval::{iou_counts, iou_matrix, uncertainty, BinaryMask};
use maskval::metrics::{mdd, threshold_for_target, EvalImage, GroundTruthObject, ScoredEstimate, Threshold};
use maskval::renderer::{mask_from_depth, Renderer, ZNEAR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1

/// Nearest hit of the ray `t * dir` (t >= ZNEAR) against a triangle.
fn ray_triangle(dir: [f64; 3], tri: [[f64; 3]; 3]) -> Option<f64> {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let p = cross(dir, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-15 {
        return None;
    }
    let s = [-tri[0][0], -tri[0][1], -tri[0][2]];
    let u = dot(s, p) / det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(s, e1);
    let v = dot(dir, q) / det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, q) / det;
    (t * dir[2] >= ZNEAR).then_some(t * dir[2])
}

fn random_mesh(rng: &mut ChaCha8Rng, near_plane: bool) -> TriangleMesh {
    let n = rng.gen_range(1..=200);
    let mut vertices = Vec::with_capacity(3 * n);
    let mut triangles = Vec::with_capacity(n);
    for i in 0..n {
        let z: f64 = if near_plane { rng.gen_range(-0.05..0.3) } else { rng.gen_range(0.3..1.5) };
        let center = Vec3::new(rng.gen_range(-0.6..0.6) * z.abs().max(0.2), rng.gen_range(-0.6..0.6) * z.abs().max(0.2), z);
        let size = rng.gen_range(0.02..0.3);
        for _ in 0..3 {
            vertices.push(center + Vec3::new(rng.gen_range(-size..size), rng.gen_range(-size..size), rng.gen_range(-size..size)));
        }
        triangles.push([3 * i, 3 * i + 1, 3 * i + 2]);
    }
    TriangleMesh::new(vertices, triangles).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut renderer = Renderer::default();
    let n_meshes = 30;
    let mut covered = 0usize;
    let (mut worst_depth, mut worst_frac, mut far_disagreements) = (0.0f64, 0.0f64, 0usize);
    for m in 0..n_meshes {
        let mesh = random_mesh(&mut rng, m % 5 == 4);
        let r = renderer.render_depth(&Pose::identity(), &mesh, &k);
        let mask = mask_from_depth(&r.depth);
        let tris: Vec<[[f64; 3]; 3]> = (0..mesh.triangles().len())
            .map(|i| mesh.triangle(i).map(|v| [v.x, v.y, v.z]))
            .collect();
        let mut oracle = vec![None::<f64>; 64 * 64];
        for y in 0..64 {
            for x in 0..64 {
                let dir = [(x as f64 + 0.5 - k.cx) / k.fx, (y as f64 + 0.5 - k.cy) / k.fy, 1.0];
                oracle[y * 64 + x] = tris
                    .iter()
                    .filter_map(|t| ray_triangle(dir, *t))
                    .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
            }
        }
        let oracle_at = |x: i64, y: i64| -> bool {
            (0..64).contains(&x) && (0..64).contains(&y) && oracle[(y * 64 + x) as usize].is_some()
        };
        let mut disagree = 0;
        for y in 0..64 {
            for x in 0..64 {
                let o = oracle[y * 64 + x];
                match (mask.get(x, y), o) {
                    (true, Some(d)) => {
                        covered += 1;
                        worst_depth = worst_depth.max((r.depth.get(x, y) as f64 - d).abs());
                    }
                    (false, None) => {}
                    _ => {
                        disagree += 1;
                        // A boundary pixel has an oracle neighbor of the other kind.
                        let here = o.is_some();
                        let boundary = (-1..=1i64).any(|dy| {
                            (-1..=1i64).any(|dx| oracle_at(x as i64 + dx, y as i64 + dy) != here)
                        });
                        if !boundary {
                            far_disagreements += 1;
                        }
                    }
                }
            }
        }
        worst_frac = worst_frac.max(disagree as f64 / (64.0 * 64.0));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_depth <= 1e-4 && worst_frac < 0.005 && far_disagreements == 0 && secs < 60.0;
    outcome(
        pass,
        format!(
            "{n_meshes} meshes, {covered} covered pixels, max |depth err| {worst_depth:.2e} m (<= 1e-4), max mask disagreement {:.3}% (< 0.5%), non-boundary {far_disagreements}, {secs:.1}s (< 60s)",
            worst_frac * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let pa = rng.gen_range(0.0..1.0);
        let pb = rng.gen_range(0.0..1.0);
        let a = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(pa));
        let b = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(pb));
        let (mut inter, mut union) = (0u64, 0u64);
        for (x, y) in a.data().iter().zip(b.data()) {
            inter += (*x && *y) as u64;
            union += (*x || *y) as u64;
        }
        let counts = iou_counts(&a, &b).unwrap();
        let got = iou_matrix(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap().get(0, 0);
        // got == inter/union as rationals: compare the cross products of the
        // exact counts, then the correctly rounded quotient.
        let same_counts = counts.intersection as u64 == inter && counts.union as u64 == union;
        let value_ok = if union == 0 {
            got == 0.0
        } else {
            (counts.intersection as u64) * union == inter * (counts.union as u64)
                && got == inter as f64 / union as f64
        };
        if !(same_counts && value_ok) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 random pairs, {mismatches} mismatches"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let u1 = uncertainty(0.9, 1.0, 0.8);
    let u2 = uncertainty(0.8, 0.5, 0.8);
    // The literal 0.9 is not representable; the subtraction from 1 is exact
    // (both operands lie within a factor of two), so u1 + fl(0.9) == 1 holds
    // exactly and u1 is the exact 1 - c for the c actually passed in.
    let ok1 = u1 + 0.9 == 1.0 && u1 == 1.0 - 0.9;
    let ok2 = u2 == 0.6 && 0.8 * 0.5 + u2 == 1.0;
    outcome(
        ok1 && ok2,
        format!("u(0.9, 1.0) = 1 - fl(0.9) = {u1:?} exactly [v >= alpha branch], u(0.8, 0.5) = {u2:?} exactly [v < alpha branch]"),
    )
}

// ---------------------------------------------------------------- 4

fn rot_from_axis_angle(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply(r: &[[f64; 3]; 3], t: &[f64; 3], p: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i])
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst, mut order_violations) = (0.0f64, 0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-0.2..0.2)))
            .collect();
        let mut pose = || {
            let axis: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let t: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            (rot_from_axis_angle(axis, angle), t, axis, angle)
        };
        let (ra, ta, axa, ana) = pose();
        let (rb, tb, axb, anb) = pose();
        let (mut max, mut sum) = (0.0f64, 0.0);
        for p in &pts {
            let a = apply(&ra, &ta, p);
            let b = apply(&rb, &tb, p);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            max = max.max(d);
            sum += d;
        }
        let add_oracle = sum / n as f64;

        let to_vec = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        let pa = Pose::from_axis_angle(to_vec(axa), ana, to_vec(ta)).unwrap();
        let pb = Pose::from_axis_angle(to_vec(axb), anb, to_vec(tb)).unwrap();
        let model = ModelPoints::new(pts.iter().map(|p| to_vec(*p)).collect()).unwrap();
        let m = mdd(&pa, &pb, &model);
        let a = add_disagreement(&pa, &pb, &model);
        worst = worst.max((m - max).abs()).max((a - add_oracle).abs());
        if m < a {
            order_violations += 1;
        }
    }
    outcome(
        worst <= 1e-9 && order_violations == 0,
        format!("1000 cases, max |err| {worst:.2e} (<= 1e-9), mdd < ADD in {order_violations} cases"),
    )
}

// ---------------------------------------------------------------- 5 & 6

fn run_cli(args: &[&str]) -> i32 {
    let mut v = vec!["maskval"];
    v.extend_from_slice(args);
    cli::run(v)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Benchmark {
    _dir: tempfile::TempDir,
    mv: PathBuf,
    mv_eval: PathBuf,
    ens_eval: PathBuf,
    secs: f64,
}

fn build_benchmark() -> Benchmark {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let gen = root.join("gen");
    let mv = root.join("mv");
    let ens = root.join("ens");
    let mv_eval = root.join("mv_eval");
    let ens_eval = root.join("ens_eval");
    let steps: [&[&str]; 5] = [
        &["generate", "--out", s(&gen), "--demo-models", "--seed", "0", "--n-images", "200", "--min-objects", "1", "--max-objects", "4", "--secondary-scale", "2"],
        &["quantify", "--input", s(&gen), "--out", s(&mv), "--method", "maskval"],
        &["quantify", "--input", s(&gen), "--out", s(&ens), "--method", "ensemble-add"],
        &["evaluate", "--input", s(&mv), "--method", "maskval", "--out", s(&mv_eval)],
        &["evaluate", "--input", s(&ens), "--method", "ensemble-add", "--out", s(&ens_eval)],
    ];
    for args in steps {
        assert_eq!(run_cli(args), 0, "maskval {args:?}");
    }
    Benchmark {
        secs: start.elapsed().as_secs_f64(),
        _dir: dir,
        mv,
        mv_eval,
        ens_eval,
    }
}

/// Per image: `(uncertainty, error)` per estimate and the truth count.
type RawImage = (Vec<(f64, Option<f64>)>, usize);

struct OracleEstimate {
    class: String,
    id: Option<u64>,
    r: [[f64; 3]; 3],
    t: [f64; 3],
    u: f64,
}

struct OracleGt {
    class: String,
    id: Option<u64>,
    r: [[f64; 3]; 3],
    t: [f64; 3],
    visible: f64,
}

struct OracleImage {
    /// Per estimate: (u, associated (gt, mdd)).
    est: Vec<(f64, Option<(usize, f64)>)>,
    counts_for_fn: Vec<bool>,
}

fn mat(v: &Value) -> [[f64; 3]; 3] {
    let a: Vec<f64> = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]]
}

fn vec3(v: &Value) -> [f64; 3] {
    let a: Vec<f64> = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    [a[0], a[1], a[2]]
}

fn oracle_mdd(a: (&[[f64; 3]; 3], &[f64; 3]), b: (&[[f64; 3]; 3], &[f64; 3]), pts: &[[f64; 3]]) -> f64 {
    pts.iter()
        .map(|p| {
            let x = apply(a.0, a.1, p);
            let y = apply(b.0, b.1, p);
            ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

fn oracle_images(dir: &Path, field: &str) -> Vec<OracleImage> {
    let mut points: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    let mut images = Vec::new();
    for f in files {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
        let gts: Vec<OracleGt> = doc["ground_truth"]
            .as_array()
            .unwrap()
            .iter()
            .map(|g| OracleGt {
                class: g["class"].as_str().unwrap().to_string(),
                id: g["instance_id"].as_u64(),
                r: mat(&g["rotation"]),
                t: vec3(&g["translation"]),
                visible: g["visible_fraction"].as_f64().unwrap(),
            })
            .collect();
        let ests: Vec<OracleEstimate> = doc["estimates"]["primary"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| OracleEstimate {
                class: e["class"].as_str().unwrap().to_string(),
                id: e["instance_id"].as_u64(),
                r: mat(&e["rotation"]),
                t: vec3(&e["translation"]),
                u: e[field]["uncertainty"].as_f64().unwrap(),
            })
            .collect();
        for c in gts.iter().map(|g| &g.class).chain(ests.iter().map(|e| &e.class)) {
            if !points.contains_key(c) {
                let mesh = load_mesh(dir.join("models").join(format!("{c}.ply"))).unwrap();
                let mp = ModelPoints::from_mesh(&mesh).unwrap();
                points.insert(c.clone(), mp.points().iter().map(|p| [p.x, p.y, p.z]).collect());
            }
        }

        let mut assoc: Vec<Option<(usize, f64)>> = vec![None; ests.len()];
        let mut used = vec![false; gts.len()];
        for (i, e) in ests.iter().enumerate() {
            if let Some(id) = e.id {
                if let Some(j) = gts.iter().position(|g| g.id == Some(id) && g.class == e.class) {
                    if !used[j] {
                        used[j] = true;
                        assoc[i] = Some((j, oracle_mdd((&e.r, &e.t), (&gts[j].r, &gts[j].t), &points[&e.class])));
                    }
                }
            }
        }
        let mut cands = Vec::new();
        for (i, e) in ests.iter().enumerate() {
            if assoc[i].is_some() {
                continue;
            }
            for (j, g) in gts.iter().enumerate() {
                if !used[j] && g.class == e.class {
                    cands.push((oracle_mdd((&e.r, &e.t), (&g.r, &g.t), &points[&e.class]), i, j));
                }
            }
        }
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (d, i, j) in cands {
            if assoc[i].is_none() && !used[j] {
                assoc[i] = Some((j, d));
                used[j] = true;
            }
        }
        images.push(OracleImage {
            est: ests.iter().map(|e| e.u).zip(assoc).collect(),
            counts_for_fn: gts.iter().map(|g| g.visible >= 0.85).collect(),
        });
    }
    images
}

/// (tp, fp, fn, tp_unfiltered, n_gt) keeping estimates with `keep(u)`.
fn oracle_counts(im: &OracleImage, e_t: f64, keep: &dyn Fn(f64) -> bool) -> (usize, usize, usize, usize, usize) {
    let mut hit = vec![false; im.counts_for_fn.len()];
    let (mut tp, mut fp, mut tp_all) = (0, 0, 0);
    for &(u, a) in &im.est {
        let is_tp = matches!(a, Some((_, d)) if d <= e_t);
        if is_tp {
            tp_all += 1;
        }
        if keep(u) {
            if is_tp {
                tp += 1;
                hit[a.unwrap().0] = true;
            } else {
                fp += 1;
            }
        }
    }
    let fn_ = im.counts_for_fn.iter().zip(&hit).filter(|(c, h)| **c && !**h).count();
    (tp, fp, fn_, tp_all, im.counts_for_fn.len())
}

fn avg(v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// (AP, AR, ARU) over images.
fn oracle_scores(images: &[OracleImage], e_t: f64, keep: &dyn Fn(f64) -> bool) -> [Option<f64>; 3] {
    let (mut ap, mut ar, mut aru) = (vec![], vec![], vec![]);
    for im in images {
        let (tp, fp, fn_, tp_all, n_gt) = oracle_counts(im, e_t, keep);
        if tp + fp > 0 {
            ap.push(tp as f64 / (tp + fp) as f64);
        } else if n_gt == 0 {
            ap.push(1.0);
        }
        if tp + fn_ > 0 {
            ar.push(tp as f64 / (tp + fn_) as f64);
        }
        if tp_all > 0 {
            aru.push(tp as f64 / tp_all as f64);
        }
    }
    [avg(ap), avg(ar), avg(aru)]
}

/// Every candidate threshold is tried; the largest feasible one wins.
fn oracle_threshold(images: &[OracleImage], e_t: f64, target: f64) -> Option<f64> {
    let mut cands: Vec<f64> = images.iter().flat_map(|im| im.est.iter().map(|e| e.0)).collect();
    cands.push(0.0);
    cands
        .into_iter()
        .filter(|&c| oracle_scores(images, e_t, &|u| u <= c)[0].is_none_or(|ap| ap >= target))
        .fold(None, |best: Option<f64>, c| Some(best.map_or(c, |b| b.max(c))))
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn oracle_spearman(images: &[OracleImage]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = images
        .iter()
        .flat_map(|im| im.est.iter().filter_map(|&(u, a)| a.map(|(_, d)| (u, d))))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let a = oracle_ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let b = oracle_ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

struct CsvRow {
    e_t: f64,
    u_t: Option<f64>,
    vals: [Option<f64>; 4],
}

fn read_csv(path: &Path) -> Vec<CsvRow> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| if s.is_empty() { None } else { Some(s.parse::<f64>().unwrap()) };
            CsvRow {
                e_t: f[0].parse().unwrap(),
                u_t: if f[1] == "INFEASIBLE" { None } else { Some(f[1].parse().unwrap()) },
                vals: [num(f[2]), num(f[3]), num(f[4]), num(f[5])],
            }
        })
        .collect()
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        _ => false,
    }
}

fn criterion_5(b: &Benchmark) -> Outcome {
    let images = oracle_images(&b.mv, "maskval");
    let rows = read_csv(&b.mv_eval.join("curves.csv"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(b.mv_eval.join("summary.json")).unwrap()).unwrap();
    let mut bad = Vec::new();
    if rows.len() != 61 {
        bad.push(format!("{} grid rows", rows.len()));
    }
    let (mut ar, mut ar_star, mut grid) = (vec![], vec![], vec![]);
    for (i, row) in rows.iter().enumerate() {
        let e_t = 0.03 * i as f64 / 60.0;
        if (row.e_t - e_t).abs() > 1e-12 {
            bad.push(format!("grid point {i}: {} vs {e_t}", row.e_t));
        }
        let u_t = oracle_threshold(&images, row.e_t, 0.99);
        let keep = |u: f64| u_t.is_some_and(|c| u <= c);
        let [ap, r, aru] = oracle_scores(&images, row.e_t, &keep);
        let star = oracle_scores(&images, row.e_t, &|_| true)[1];
        if !close(row.u_t, u_t) || !close(row.vals[0], ap) || !close(row.vals[1], r) || !close(row.vals[2], aru) || !close(row.vals[3], star) {
            bad.push(format!("e_t {}: csv u_T {:?} {:?} vs oracle {u_t:?} {:?}", row.e_t, row.u_t, row.vals, [ap, r, aru, star]));
        }
        grid.push(row.e_t);
        ar.push(r.unwrap_or(0.0));
        ar_star.push(star.unwrap_or(0.0));
    }
    let auc = |v: &[f64]| {
        let area: f64 = (1..grid.len()).map(|i| (grid[i] - grid[i - 1]) * (v[i] + v[i - 1]) / 2.0).sum();
        100.0 * area / (grid[grid.len() - 1] - grid[0])
    };
    let (auc_ar, auc_star) = (auc(&ar), auc(&ar_star));
    let rho = oracle_spearman(&images);
    if !close(summary["auc_ar"].as_f64(), Some(auc_ar)) {
        bad.push(format!("auc_ar {} vs {auc_ar}", summary["auc_ar"]));
    }
    if !close(summary["auc_ar_star"].as_f64(), Some(auc_star)) {
        bad.push(format!("auc_ar_star {} vs {auc_star}", summary["auc_ar_star"]));
    }
    if !close(summary["spearman_rho"].as_f64(), rho) {
        bad.push(format!("spearman {} vs {rho:?}", summary["spearman_rho"]));
    }
    let last_u = oracle_threshold(&images, 0.03, 0.99);
    let totals = images.iter().fold((0, 0, 0), |acc, im| {
        let (tp, fp, fn_, _, _) = oracle_counts(im, 0.03, &|u| last_u.is_some_and(|c| u <= c));
        (acc.0 + tp, acc.1 + fp, acc.2 + fn_)
    });
    let t = &summary["totals"];
    let got = (t["tp"].as_u64().unwrap() as usize, t["fp"].as_u64().unwrap() as usize, t["fn"].as_u64().unwrap() as usize);
    if got != totals {
        bad.push(format!("totals {got:?} vs {totals:?}"));
    }
    let pass = bad.is_empty() && b.secs < 300.0;
    outcome(
        pass,
        format!(
            "200 images, {} estimates: 61 grid points + AUC {auc_ar:.3} + Spearman {} + totals vs brute force (tol 1e-9), {} mismatches; pipeline {:.1}s (< 300s){}",
            images.iter().map(|i| i.est.len()).sum::<usize>(),
            rho.map_or("undefined".into(), |r| format!("{r:.4}")),
            bad.len(),
            b.secs,
            bad.first().map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    )
}

fn criterion_6(b: &Benchmark) -> Outcome {
    let read = |p: &Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p.join("summary.json")).unwrap()).unwrap() };
    let mv = read(&b.mv_eval);
    let ens = read(&b.ens_eval);
    let rho = mv["spearman_rho"].as_f64().unwrap_or(f64::NAN);
    let rows = read_csv(&b.mv_eval.join("curves.csv"));
    let ap_ok = rows
        .iter()
        .filter(|r| r.u_t.is_some())
        .all(|r| r.vals[0].is_none_or(|ap| ap >= 0.99));
    let last = rows.last().unwrap();
    let aru = last.vals[2].unwrap_or(0.0);
    let (auc_mv, auc_ens) = (mv["auc_ar"].as_f64().unwrap(), ens["auc_ar"].as_f64().unwrap());
    let a = rho >= 0.6;
    let bb = ap_ok && (last.e_t - 0.03).abs() < 1e-12 && aru >= 0.8;
    let c = auc_mv > auc_ens;
    outcome(
        a && bb && c,
        format!(
            "(a) Spearman {rho:.4} >= 0.6 [{}]; (b) AP >= 0.99 at all feasible points [{}], ARU@0.03 {aru:.4} >= 0.8 [{}]; (c) AUC AR MaskVal {auc_mv:.2} > Ensemble-ADD {auc_ens:.2} [{}]",
            if a { "ok" } else { "FAIL" },
            if ap_ok { "ok" } else { "FAIL" },
            if aru >= 0.8 { "ok" } else { "FAIL" },
            if c { "ok" } else { "FAIL" }
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let model = ModelPoints::new(vec![Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.0, 0.05, 0.0), Vec3::new(0.0, 0.0, 0.05)]).unwrap();
    let models = BTreeMap::from([("a".to_string(), model.clone()), ("b".to_string(), model)]);
    let mut disagreements = 0;
    let mut infeasible = 0;
    for _ in 0..100 {
        let n_images = rng.gen_range(1..6);
        let mut budget = rng.gen_range(1..=50usize);
        let mut images = Vec::new();
        let mut raw: Vec<RawImage> = Vec::new();
        for _ in 0..n_images {
            let n_gt = rng.gen_range(0..6);
            let n_est = rng.gen_range(0..=budget.min(12));
            budget -= n_est;
            let classes = ["a", "b"];
            let gts: Vec<GroundTruthObject> = (0..n_gt)
                .map(|j| GroundTruthObject {
                    pose: Pose::from_translation(Vec3::new(j as f64, 0.0, 1.0)),
                    class: classes[j % 2].into(),
                    visible_fraction: rng.gen_range(0.5..1.0),
                    instance_id: Some(j as u64),
                })
                .collect();
            // Coarse uncertainty levels produce ties.
            let est: Vec<ScoredEstimate> = (0..n_est)
                .map(|i| {
                    let j = if n_gt > 0 && rng.gen_bool(0.8) { Some(rng.gen_range(0..n_gt)) } else { None };
                    let err = rng.gen_range(0.0..0.03);
                    let base = j.map_or(Vec3::new(50.0 + i as f64, 0.0, 1.0), |j| Vec3::new(j as f64, 0.0, 1.0));
                    ScoredEstimate {
                        pose: Pose::from_translation(base + Vec3::new(0.0, err, 0.0)),
                        class: j.map_or("a", |j| classes[j % 2]).into(),
                        uncertainty: (rng.gen_range(0..=10) as f64) / 10.0,
                        instance_id: None,
                    }
                })
                .collect();
            let im = EvalImage::new(&est, &gts, &models, 0.85).unwrap();
            raw.push((im.uncertainties().iter().copied().zip(im.errors()).collect(), n_gt));
            images.push(im);
        }
        let e_t = rng.gen_range(0.0..0.03);
        let target = [1.0, 0.99, 0.9, 0.75, 0.5][rng.gen_range(0..5)];
        // Exhaustive: AP of every candidate threshold from raw per-estimate data.
        let ap = |c: f64| {
            let terms: Vec<f64> = raw
                .iter()
                .filter_map(|(est, n_gt)| {
                    let kept: Vec<&(f64, Option<f64>)> = est.iter().filter(|e| e.0 <= c).collect();
                    let tp = kept.iter().filter(|e| e.1.is_some_and(|d| d <= e_t)).count();
                    if !kept.is_empty() {
                        Some(tp as f64 / kept.len() as f64)
                    } else if *n_gt == 0 {
                        Some(1.0)
                    } else {
                        None
                    }
                })
                .collect();
            avg(terms)
        };
        let mut cands: Vec<f64> = raw.iter().flat_map(|(e, _)| e.iter().map(|x| x.0)).collect();
        cands.push(0.0);
        let best = cands
            .into_iter()
            .filter(|&c| ap(c).is_none_or(|a| a >= target))
            .fold(None, |b: Option<f64>, c| Some(b.map_or(c, |b| b.max(c))));
        let got = threshold_for_target(&images, e_t, target).unwrap();
        if got == Threshold::Infeasible {
            infeasible += 1;
        }
        if got.value() != best {
            disagreements += 1;
        }
    }
    outcome(disagreements == 0, format!("100 instances (<= 50 estimates), {disagreements} disagreements with exhaustive scan ({infeasible} infeasible)"))
}

// ---------------------------------------------------------------- 8

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let run = |jobs: &str| {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        let (gen, mv, ens, e1, e2) = (r.join("gen"), r.join("mv"), r.join("ens"), r.join("e_mv"), r.join("e_ens"));
        let steps: [&[&str]; 5] = [
            &["--jobs", jobs, "generate", "--out", s(&gen), "--demo-models", "--seed", "42", "--n-images", "30"],
            &["--jobs", jobs, "quantify", "--input", s(&gen), "--out", s(&mv), "--method", "maskval"],
            &["--jobs", jobs, "quantify", "--input", s(&gen), "--out", s(&ens), "--method", "ensemble-add"],
            &["--jobs", jobs, "evaluate", "--input", s(&mv), "--method", "maskval", "--out", s(&e1)],
            &["--jobs", jobs, "evaluate", "--input", s(&ens), "--method", "ensemble-add", "--out", s(&e2)],
        ];
        for a in steps {
            assert_eq!(run_cli(a), 0, "{a:?}");
        }
        tree_bytes(r)
    };
    let a = run("1");
    let b = run("4");
    let differing: Vec<_> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let same = a.len() == b.len() && differing.is_empty();
    outcome(same, format!("{} files compared across two runs (1 vs 4 threads), {} differ", a.len(), differing.len() + a.len().abs_diff(b.len())))
}

fn main() {
    let bench = build_benchmark();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("renderer vs ray casting", Box::new(criterion_1)),
        ("IOU vs exhaustive counting", Box::new(criterion_2)),
        ("uncertainty branches", Box::new(criterion_3)),
        ("MDD/ADD vs direct summation", Box::new(criterion_4)),
        ("metric pipeline vs brute force", Box::new(|| criterion_5(&bench))),
        ("qualitative ordering", Box::new(|| criterion_6(&bench))),
        ("threshold maximality", Box::new(criterion_7)),
        ("determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += !o.pass as usize;
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
