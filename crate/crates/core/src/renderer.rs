//! CPU depth rasterizer.
//!
//! Every render goes onto a padded canvas, `pad_factor` times the image size
//! in each direction with the image window centered, so the visibility
//! ratio can be read off as window pixels over canvas pixels.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, Vec3};
use crate::maskval::BinaryMask;

/// Near clipping plane (meters).
pub const ZNEAR: f64 = 1e-4;

pub const DEFAULT_PAD_FACTOR: usize = 3;

/// Row-major depth image in meters; 0 marks background.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "depth buffer has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidMask("depth entries must be >= 0".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn covered_pixels(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult {
    /// Depth inside the original image window.
    pub depth: DepthMap,
    /// Object pixels inside the window over object pixels on the padded canvas.
    pub visibility: f64,
    /// Object pixels reached the padded canvas border, so `visibility` is an
    /// upper bound.
    pub truncated: bool,
    pub window_pixels: usize,
    pub canvas_pixels: usize,
}

/// `δ₁`: 1 wherever depth is strictly positive.
pub fn mask_from_depth(depth: &DepthMap) -> BinaryMask {
    BinaryMask::from_fn(depth.width, depth.height, |x, y| depth.get(x, y) > 0.0)
}

/// Owns the padded z-buffer. One instance per thread.
#[derive(Debug)]
pub struct Renderer {
    pad_factor: usize,
    canvas: Vec<f32>,
    canvas_w: usize,
    canvas_h: usize,
    // Inclusive pixel bounds written by the last render.
    dirty: Option<(usize, usize, usize, usize)>,
    cam_vertices: Vec<Vec3>,
}

#[derive(Clone, Copy, Debug)]
struct ScreenVertex {
    u: f64,
    v: f64,
    inv_z: f64,
}

impl Default for Renderer {
    fn default() -> Self {
        Self::new(DEFAULT_PAD_FACTOR).expect("default pad factor is valid")
    }
}

impl Renderer {
    pub fn new(pad_factor: usize) -> Result<Self> {
        if pad_factor == 0 {
            return Err(Error::InvalidConfig("pad_factor must be >= 1".into()));
        }
        Ok(Self {
            pad_factor,
            canvas: Vec::new(),
            canvas_w: 0,
            canvas_h: 0,
            dirty: None,
            cam_vertices: Vec::new(),
        })
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    fn prepare(&mut self, k: &CameraIntrinsics) {
        let (w, h) = (k.width * self.pad_factor, k.height * self.pad_factor);
        if (w, h) != (self.canvas_w, self.canvas_h) {
            self.canvas_w = w;
            self.canvas_h = h;
            self.canvas.clear();
            self.canvas.resize(w * h, 0.0);
            self.dirty = None;
        } else if let Some((x0, y0, x1, y1)) = self.dirty.take() {
            for y in y0..=y1 {
                self.canvas[y * w + x0..=y * w + x1].fill(0.0);
            }
        }
    }

    fn offsets(&self, k: &CameraIntrinsics) -> (usize, usize) {
        (
            (self.pad_factor - 1) * k.width / 2,
            (self.pad_factor - 1) * k.height / 2,
        )
    }

    pub fn render_depth(
        &mut self,
        pose: &Pose,
        mesh: &TriangleMesh,
        k: &CameraIntrinsics,
    ) -> RenderResult {
        self.prepare(k);
        let (ox, oy) = self.offsets(k);
        let cx = k.cx + ox as f64;
        let cy = k.cy + oy as f64;

        self.cam_vertices.clear();
        self.cam_vertices
            .extend(mesh.vertices().iter().map(|v| pose.transform_point(v)));

        let mut canvas_pixels = 0usize;
        let mut clipped: Vec<Vec3> = Vec::with_capacity(4);
        for tri in mesh.triangles() {
            let corners = [
                self.cam_vertices[tri[0]],
                self.cam_vertices[tri[1]],
                self.cam_vertices[tri[2]],
            ];
            clip_near(&corners, &mut clipped);
            if clipped.len() < 3 {
                continue;
            }
            let screen: Vec<ScreenVertex> = clipped
                .iter()
                .map(|p| ScreenVertex {
                    u: k.fx * p.x / p.z + cx,
                    v: k.fy * p.y / p.z + cy,
                    inv_z: 1.0 / p.z,
                })
                .collect();
            for i in 1..screen.len() - 1 {
                canvas_pixels += self.raster_triangle(screen[0], screen[i], screen[i + 1]);
            }
        }

        let mut depth = DepthMap::zeros(k.width, k.height);
        let mut window_pixels = 0usize;
        let mut truncated = false;
        if let Some((x0, y0, x1, y1)) = self.dirty {
            truncated = x0 == 0 || y0 == 0 || x1 + 1 == self.canvas_w || y1 + 1 == self.canvas_h;
            let wx0 = x0.max(ox);
            let wx1 = x1.min(ox + k.width - 1);
            let wy0 = y0.max(oy);
            let wy1 = y1.min(oy + k.height - 1);
            if wx0 <= wx1 && wy0 <= wy1 {
                for y in wy0..=wy1 {
                    let row = &self.canvas[y * self.canvas_w..(y + 1) * self.canvas_w];
                    let out = &mut depth.data[(y - oy) * k.width..(y - oy + 1) * k.width];
                    for x in wx0..=wx1 {
                        let d = row[x];
                        if d > 0.0 {
                            out[x - ox] = d;
                            window_pixels += 1;
                        }
                    }
                }
            }
        }
        let visibility = if canvas_pixels == 0 {
            0.0
        } else {
            window_pixels as f64 / canvas_pixels as f64
        };
        RenderResult {
            depth,
            visibility,
            truncated,
            window_pixels,
            canvas_pixels,
        }
    }

    /// Rasterizes one screen-space triangle into the canvas and returns the
    /// number of previously empty pixels it covered.
    fn raster_triangle(&mut self, p0: ScreenVertex, p1: ScreenVertex, p2: ScreenVertex) -> usize {
        let area = edge(p0, p1, p2.u, p2.v);
        if area == 0.0 || !area.is_finite() {
            return 0;
        }
        // No culling: flip clockwise triangles so the edge tests share a sign.
        let (p1, p2, area) = if area < 0.0 { (p2, p1, -area) } else { (p1, p2, area) };

        let min_u = p0.u.min(p1.u).min(p2.u);
        let max_u = p0.u.max(p1.u).max(p2.u);
        let min_v = p0.v.min(p1.v).min(p2.v);
        let max_v = p0.v.max(p1.v).max(p2.v);
        let Some((x0, x1)) = pixel_span(min_u, max_u, self.canvas_w) else {
            return 0;
        };
        let Some((y0, y1)) = pixel_span(min_v, max_v, self.canvas_h) else {
            return 0;
        };

        let tl0 = is_top_left(p1, p2);
        let tl1 = is_top_left(p2, p0);
        let tl2 = is_top_left(p0, p1);

        let mut fresh = 0usize;
        let mut touched: Option<(usize, usize, usize, usize)> = None;
        for y in y0..=y1 {
            let pv = y as f64 + 0.5;
            for x in x0..=x1 {
                let pu = x as f64 + 0.5;
                let w0 = edge(p1, p2, pu, pv);
                let w1 = edge(p2, p0, pu, pv);
                let w2 = edge(p0, p1, pu, pv);
                if !(covers(w0, tl0) && covers(w1, tl1) && covers(w2, tl2)) {
                    continue;
                }
                let inv_z = (w0 * p0.inv_z + w1 * p1.inv_z + w2 * p2.inv_z) / area;
                let z = (1.0 / inv_z) as f32;
                let slot = &mut self.canvas[y * self.canvas_w + x];
                if *slot == 0.0 {
                    fresh += 1;
                    *slot = z;
                } else if z < *slot {
                    *slot = z;
                }
                touched = Some(match touched {
                    None => (x, y, x, y),
                    Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                });
            }
        }
        if let Some((a, b, c, d)) = touched {
            self.dirty = Some(match self.dirty {
                None => (a, b, c, d),
                Some((e, f, g, h)) => (a.min(e), b.min(f), c.max(g), d.max(h)),
            });
        }
        fresh
    }
}

/// Renders with a throwaway [`Renderer`] using the default pad factor.
pub fn render_depth(pose: &Pose, mesh: &TriangleMesh, k: &CameraIntrinsics) -> RenderResult {
    Renderer::default().render_depth(pose, mesh, k)
}

/// Per-object result of a multi-object render with mutual occlusion.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibleSurface {
    /// Pixels where this object is the nearest surface.
    pub mask: BinaryMask,
    /// Visible window pixels over the object's unoccluded padded-canvas pixels.
    pub visible_fraction: f64,
    pub truncated: bool,
}

/// Renders several objects into one image, resolving occlusion with a
/// shared z-buffer. Ties go to the lower object index.
pub fn render_visible_surfaces(
    renderer: &mut Renderer,
    objects: &[(Pose, &TriangleMesh)],
    k: &CameraIntrinsics,
) -> Vec<VisibleSurface> {
    let renders: Vec<RenderResult> = objects
        .iter()
        .map(|(pose, mesh)| renderer.render_depth(pose, mesh, k))
        .collect();
    let n_pix = k.width * k.height;
    let mut owner: Vec<Option<usize>> = vec![None; n_pix];
    let mut best = vec![f32::INFINITY; n_pix];
    for (i, r) in renders.iter().enumerate() {
        for (p, &d) in r.depth.data().iter().enumerate() {
            if d > 0.0 && d < best[p] {
                best[p] = d;
                owner[p] = Some(i);
            }
        }
    }
    renders
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mask = BinaryMask::from_fn(k.width, k.height, |x, y| {
                owner[y * k.width + x] == Some(i)
            });
            let visible_fraction = if r.canvas_pixels == 0 {
                0.0
            } else {
                mask.count_ones() as f64 / r.canvas_pixels as f64
            };
            VisibleSurface {
                mask,
                visible_fraction,
                truncated: r.truncated,
            }
        })
        .collect()
}

#[inline]
fn edge(a: ScreenVertex, b: ScreenVertex, pu: f64, pv: f64) -> f64 {
    (b.u - a.u) * (pv - a.v) - (b.v - a.v) * (pu - a.u)
}

// With y pointing down and positive area, top edges run in +u and left
// edges run upward.
#[inline]
fn is_top_left(a: ScreenVertex, b: ScreenVertex) -> bool {
    let du = b.u - a.u;
    let dv = b.v - a.v;
    (dv == 0.0 && du > 0.0) || dv < 0.0
}

#[inline]
fn covers(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Pixel index range whose centers fall in `[lo, hi]`, clamped to `[0, n)`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    if !(first <= last) {
        return None;
    }
    Some((first as usize, last as usize))
}

/// Sutherland-Hodgman against the `z >= ZNEAR` half-space.
fn clip_near(tri: &[Vec3; 3], out: &mut Vec<Vec3>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= ZNEAR;
        let b_in = b.z >= ZNEAR;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (ZNEAR - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = ZNEAR;
            out.push(p);
        }
    }
}
