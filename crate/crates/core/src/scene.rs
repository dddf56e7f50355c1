//! Synthetic document-scene generation.
//!
//! Boundary scenes composite 1-5 procedural document templates onto a
//! procedurally textured background with random perspective, brightness
//! variation and noise; the ground truth is the union of the warped document
//! quads. Text scenes are full-frame documents whose ground truth marks the
//! bounding regions of text-like stroke blocks.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{GrayImage, Mask};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// Homography
// ---------------------------------------------------------------------------

/// 3x3 projective transform, normalized so h33 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translate(dx: f64, dy: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Homography {
            m: [[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation by `rad` about (cx, cy).
    pub fn rotation_about(rad: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = (libm::sin(rad), libm::cos(rad));
        Homography::translate(cx, cy)
            .compose(&Homography {
                m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            })
            .compose(&Homography::translate(-cx, -cy))
    }

    pub fn scale_about(sx: f64, sy: f64, cx: f64, cy: f64) -> Self {
        Homography::translate(cx, cy)
            .compose(&Homography::scale(sx, sy))
            .compose(&Homography::translate(-cx, -cy))
    }

    /// self after other: (self ∘ other)(p) = self(other(p)).
    pub fn compose(&self, other: &Homography) -> Homography {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Homography { m: out }.normalized()
    }

    fn normalized(mut self) -> Homography {
        let h = self.m[2][2];
        if h != 0.0 && h != 1.0 {
            for row in &mut self.m {
                for v in row {
                    *v /= h;
                }
            }
        }
        self
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Homography> {
        let d = self.det();
        if libm::fabs(d) <= 1e-9 {
            return Err(Error::Numeric(format!(
                "homography is not invertible (det = {d:e})"
            )));
        }
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = adj[i][j] / d;
            }
        }
        Ok(Homography { m: out }.normalized())
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    /// Homography mapping the unit square corners (0,0),(1,0),(1,1),(0,1)
    /// onto `quad`, via an 8x8 linear solve.
    pub fn unit_square_to_quad(quad: &[(f64, f64); 4]) -> Result<Homography> {
        let src = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        // unknowns: h11 h12 h13 h21 h22 h23 h31 h32 (h33 = 1)
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = src[i];
            let (u, v) = quad[i];
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
        }
        let h = solve8(&mut a)?;
        Ok(Homography {
            m: [
                [h[0], h[1], h[2]],
                [h[3], h[4], h[5]],
                [h[6], h[7], 1.0],
            ],
        })
    }
}

/// Gaussian elimination with partial pivoting on an 8x8 augmented system.
fn solve8(a: &mut [[f64; 9]; 8]) -> Result<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| {
                libm::fabs(a[i][col])
                    .partial_cmp(&libm::fabs(a[j][col]))
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .unwrap();
        if libm::fabs(a[pivot][col]) < 1e-12 {
            return Err(Error::Numeric("degenerate quad for homography".into()));
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..9 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0; 8];
    for i in 0..8 {
        x[i] = a[i][8] / a[i][i];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Warping
// ---------------------------------------------------------------------------

fn bilinear_sample(img: &GrayImage, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (img.w - 1) as f64);
    let yc = y.clamp(0.0, (img.h - 1) as f64);
    let x0 = xc as usize;
    let y0 = yc as usize;
    let x1 = (x0 + 1).min(img.w - 1);
    let y1 = (y0 + 1).min(img.h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let v00 = img.get(x0, y0) as f64;
    let v10 = img.get(x1, y0) as f64;
    let v01 = img.get(x0, y1) as f64;
    let v11 = img.get(x1, y1) as f64;
    v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
}

fn clamp_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 255.0)) as u8
}

/// Inverse-mapping warp with bilinear sampling. `h` maps source pixel
/// coordinates to output pixel coordinates; output pixels whose preimage
/// falls outside the source are transparent (coverage mask 0).
pub fn warp(image: &GrayImage, h: &Homography, out_w: usize, out_h: usize) -> Result<(GrayImage, Mask)> {
    let inv = h.inverse()?;
    let mut out = GrayImage::new(out_w, out_h);
    let mut cov = Mask::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            if sx >= 0.0 && sx <= image.w as f64 && sy >= 0.0 && sy <= image.h as f64 {
                out.set(x, y, clamp_u8(bilinear_sample(image, sx - 0.5, sy - 0.5)));
                cov.set(x, y, 1);
            }
        }
    }
    Ok((out, cov))
}

/// Nearest-neighbor warp of a mask under the same convention as `warp`;
/// uncovered output pixels are 0, so the result stays binary.
pub fn warp_mask(mask: &Mask, h: &Homography, out_w: usize, out_h: usize) -> Result<Mask> {
    let inv = h.inverse()?;
    let mut out = Mask::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            if sx >= 0.0 && sx <= mask.w as f64 && sy >= 0.0 && sy <= mask.h as f64 {
                let ix = (sx - 0.5).clamp(0.0, (mask.w - 1) as f64);
                let iy = (sy - 0.5).clamp(0.0, (mask.h - 1) as f64);
                out.set(x, y, mask.get(libm::round(ix) as usize, libm::round(iy) as usize));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Procedural backgrounds and document templates
// ---------------------------------------------------------------------------

/// Bilinearly interpolated random grid, the base texture primitive.
fn value_noise(rng: &mut Rng, w: usize, h: usize, cell: usize, lo: f64, hi: f64) -> GrayImage {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.uniform_in(lo, hi)).collect();
    let mut img = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let gx = x as f64 / cell as f64;
            let gy = y as f64 / cell as f64;
            let x0 = gx as usize;
            let y0 = gy as usize;
            let fx = gx - x0 as f64;
            let fy = gy - y0 as f64;
            let v00 = grid[y0 * gw + x0];
            let v10 = grid[y0 * gw + x0 + 1];
            let v01 = grid[(y0 + 1) * gw + x0];
            let v11 = grid[(y0 + 1) * gw + x0 + 1];
            let v = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
            img.set(x, y, clamp_u8(v));
        }
    }
    img
}

pub const BACKGROUND_FAMILIES: u32 = 4;

/// Procedural background in the dark-to-mid range so documents stand out,
/// mirroring how the source corpora photograph documents on desks and
/// scanner beds.
pub fn generate_background(rng: &mut Rng, size: usize, family: u32) -> GrayImage {
    match family % BACKGROUND_FAMILIES {
        0 => {
            // coarse blotchy noise field
            let cell = rng.range(8, 24);
            value_noise(rng, size, size, cell, 25.0, 115.0)
        }
        1 => {
            // linear gradient with a little noise
            let (g0, g1) = (rng.uniform_in(20.0, 70.0), rng.uniform_in(70.0, 130.0));
            let vertical = rng.chance(0.5);
            let mut img = GrayImage::new(size, size);
            for y in 0..size {
                for x in 0..size {
                    let t = if vertical {
                        y as f64 / size as f64
                    } else {
                        x as f64 / size as f64
                    };
                    let v = g0 + (g1 - g0) * t + rng.uniform_in(-6.0, 6.0);
                    img.set(x, y, clamp_u8(v));
                }
            }
            img
        }
        2 => {
            // wood-like grain: sinusoidal stripes perturbed by noise
            let base = value_noise(rng, size, size, 16, -12.0, 12.0);
            let freq = rng.uniform_in(0.08, 0.25);
            let tone = rng.uniform_in(45.0, 95.0);
            let amp = rng.uniform_in(12.0, 30.0);
            let along_x = rng.chance(0.5);
            let mut img = GrayImage::new(size, size);
            for y in 0..size {
                for x in 0..size {
                    let coord = if along_x { x } else { y } as f64;
                    let wobble = base.get(x, y) as f64;
                    let v = tone + amp * libm::sin(freq * (coord + wobble));
                    img.set(x, y, clamp_u8(v));
                }
            }
            img
        }
        _ => {
            // fabric-like weave
            let fx = rng.uniform_in(0.3, 0.9);
            let fy = rng.uniform_in(0.3, 0.9);
            let tone = rng.uniform_in(35.0, 90.0);
            let amp = rng.uniform_in(8.0, 20.0);
            let mut img = GrayImage::new(size, size);
            for y in 0..size {
                for x in 0..size {
                    let v = tone
                        + amp * libm::sin(fx * x as f64) * libm::sin(fy * y as f64)
                        + rng.uniform_in(-5.0, 5.0);
                    img.set(x, y, clamp_u8(v));
                }
            }
            img
        }
    }
}

fn fill_rect(img: &mut GrayImage, x0: usize, y0: usize, w: usize, h: usize, v: u8) {
    for y in y0..(y0 + h).min(img.h) {
        for x in x0..(x0 + w).min(img.w) {
            img.set(x, y, v);
        }
    }
}

/// Procedural ID-card-like template: light base, darker border frame,
/// text-like stroke rows, and sometimes a photo box.
pub fn render_template(rng: &mut Rng, w: usize, h: usize) -> GrayImage {
    let base = clamp_u8(rng.uniform_in(195.0, 245.0));
    let mut img = GrayImage::new(w, h);
    img.data.fill(base);
    // subtle paper texture
    for v in img.data.iter_mut() {
        let d = rng.uniform_in(-4.0, 4.0);
        *v = clamp_u8(*v as f64 + d);
    }
    // border frame
    let bw = (w / 40).max(1);
    let frame = clamp_u8(base as f64 - rng.uniform_in(60.0, 110.0));
    fill_rect(&mut img, 0, 0, w, bw, frame);
    fill_rect(&mut img, 0, h - bw, w, bw, frame);
    fill_rect(&mut img, 0, 0, bw, h, frame);
    fill_rect(&mut img, w - bw, 0, bw, h, frame);

    // optional photo box on the left
    let mut text_x0 = w / 12;
    if rng.chance(0.6) {
        let pw = w / 4;
        let ph = h / 2;
        let px = w / 12;
        let py = h / 5;
        fill_rect(&mut img, px, py, pw, ph, clamp_u8(rng.uniform_in(70.0, 130.0)));
        text_x0 = px + pw + w / 20;
    }
    // text-like stroke rows
    let ink = clamp_u8(rng.uniform_in(20.0, 70.0));
    let row_h = (h / 14).max(2);
    let mut y = h / 6;
    while y + row_h < h - h / 8 {
        let mut x = text_x0;
        while x + 3 < w - w / 12 {
            let run = rng.range(3, (w / 6).max(4));
            let gap = rng.range(2, (w / 20).max(3));
            if rng.chance(0.8) {
                fill_rect(&mut img, x, y, run.min(w - w / 12 - x), (row_h * 2 / 3).max(1), ink);
            }
            x += run + gap;
        }
        y += row_h + rng.range(1, row_h.max(2));
    }
    img
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

/// Placement record for one document in a boundary scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPlacement {
    pub homography: Homography,
    pub template_w: usize,
    pub template_h: usize,
}

/// Everything needed to reproduce a scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub background_id: u32,
    pub docs: Vec<DocPlacement>,
    pub text_blocks: Vec<(usize, usize, usize, usize)>,
    pub noise_sigma: f64,
    pub brightness: f64,
    pub augmentations: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: GrayImage,
    pub mask: Mask,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct BoundaryConfig {
    pub size: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    /// Distinct procedural background draws to mimic corpus diversity.
    pub background_variants: u32,
    pub noise_sigma: (f64, f64),
    pub brightness: (f64, f64),
    /// Document half-extent as a fraction of the canvas.
    pub doc_extent: (f64, f64),
    /// Corner perspective jitter as a fraction of the extent.
    pub perspective_jitter: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            size: 96,
            min_docs: 1,
            max_docs: 5,
            background_variants: 273,
            noise_sigma: (0.0, 6.0),
            brightness: (0.9, 1.1),
            doc_extent: (0.14, 0.34),
            perspective_jitter: 0.18,
        }
    }
}

fn quad_is_convex(q: &[(f64, f64); 4]) -> bool {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (ax, ay) = q[i];
        let (bx, by) = q[(i + 1) % 4];
        let (cx, cy) = q[(i + 2) % 4];
        let cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx);
        if cross == 0.0 {
            return false;
        }
        if sign == 0.0 {
            sign = cross;
        } else if sign * cross < 0.0 {
            return false;
        }
    }
    true
}

fn quad_in_canvas(q: &[(f64, f64); 4], size: f64, margin: f64) -> bool {
    q.iter()
        .all(|&(x, y)| x >= margin && y >= margin && x <= size - margin && y <= size - margin)
}

/// Sample a random perspective placement: a rotated rectangle with jittered
/// corners, convex and fully inside the canvas. Retries up to 50 times.
pub fn sample_placement(rng: &mut Rng, cfg: &BoundaryConfig) -> Result<[(f64, f64); 4]> {
    let size = cfg.size as f64;
    for _ in 0..50 {
        let rx = rng.uniform_in(cfg.doc_extent.0, cfg.doc_extent.1) * size;
        let ry = rx * rng.uniform_in(0.55, 0.8); // card-like aspect
        let reach = libm::sqrt(rx * rx + ry * ry) * (1.0 + cfg.perspective_jitter);
        if 2.0 * reach >= size {
            continue;
        }
        let cx = rng.uniform_in(reach, size - reach);
        let cy = rng.uniform_in(reach, size - reach);
        let theta = rng.uniform_in(0.0, 2.0 * core::f64::consts::PI);
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let base = [(-rx, -ry), (rx, -ry), (rx, ry), (-rx, ry)];
        let mut quad = [(0.0, 0.0); 4];
        for (out, &(dx, dy)) in quad.iter_mut().zip(&base) {
            let jx = rng.uniform_in(-cfg.perspective_jitter, cfg.perspective_jitter) * rx;
            let jy = rng.uniform_in(-cfg.perspective_jitter, cfg.perspective_jitter) * ry;
            *out = (cx + c * dx - s * dy + jx, cy + s * dx + c * dy + jy);
        }
        if quad_is_convex(&quad) && quad_in_canvas(&quad, size, 1.0) {
            return Ok(quad);
        }
    }
    Err(Error::Config(
        "could not place a document after 50 retries; check extent configuration".into(),
    ))
}

/// CDPhoto-style scene: 1-5 documents over a textured background.
pub fn gen_boundary_scene(rng: &mut Rng, cfg: &BoundaryConfig) -> Result<Scene> {
    if cfg.min_docs < 1 || cfg.max_docs < cfg.min_docs {
        return Err(Error::Config(format!(
            "invalid document count range {}..={}",
            cfg.min_docs, cfg.max_docs
        )));
    }
    if cfg.size < 16 {
        return Err(Error::Config("canvas too small".into()));
    }
    let background_id = rng.below(cfg.background_variants.max(1) as usize) as u32;
    let mut bg_rng = Rng::from_seed(crate::rng::child_seed(rng.next_u64(), 0xb6, background_id as u64));
    let mut image = generate_background(&mut bg_rng, cfg.size, background_id);
    let mut mask = Mask::new(cfg.size, cfg.size);

    let n_docs = rng.range(cfg.min_docs, cfg.max_docs + 1);
    let mut docs = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let quad = sample_placement(rng, cfg)?;
        let h_unit = Homography::unit_square_to_quad(&quad)?;
        let tw = cfg.size.max(64);
        let th = (tw * 2) / 3;
        let template = render_template(rng, tw, th);
        // pixel-coordinate homography: template pixels -> unit square -> quad
        let h_pix = h_unit.compose(&Homography::scale(1.0 / tw as f64, 1.0 / th as f64));
        let (warped, cov) = warp(&template, &h_pix, cfg.size, cfg.size)?;
        for y in 0..cfg.size {
            for x in 0..cfg.size {
                if cov.get(x, y) == 1 {
                    image.set(x, y, warped.get(x, y));
                    mask.set(x, y, 1);
                }
            }
        }
        docs.push(DocPlacement {
            homography: h_unit,
            template_w: tw,
            template_h: th,
        });
    }

    // global brightness variation and additive noise
    let brightness = rng.uniform_in(cfg.brightness.0, cfg.brightness.1);
    let noise_sigma = rng.uniform_in(cfg.noise_sigma.0, cfg.noise_sigma.1);
    for v in image.data.iter_mut() {
        let noisy = *v as f64 * brightness + rng.normal() * noise_sigma;
        *v = clamp_u8(noisy);
    }

    Ok(Scene {
        image,
        mask,
        provenance: Provenance {
            background_id,
            docs,
            text_blocks: Vec::new(),
            noise_sigma,
            brightness,
            augmentations: Vec::new(),
            seed: 0,
        },
    })
}

#[derive(Debug, Clone)]
pub struct TextConfig {
    pub size: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub noise_sigma: (f64, f64),
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            size: 96,
            min_blocks: 2,
            max_blocks: 6,
            noise_sigma: (0.0, 4.0),
        }
    }
}

/// DTD-style scene: a full-frame document whose mask marks the bounding
/// regions of text-like stroke blocks.
pub fn gen_text_scene(rng: &mut Rng, cfg: &TextConfig) -> Result<Scene> {
    if cfg.max_blocks < cfg.min_blocks {
        return Err(Error::Config(format!(
            "invalid block count range {}..={}",
            cfg.min_blocks, cfg.max_blocks
        )));
    }
    let size = cfg.size;
    if size < 16 {
        return Err(Error::Config("canvas too small".into()));
    }
    let base = clamp_u8(rng.uniform_in(200.0, 245.0));
    let mut image = GrayImage::new(size, size);
    image.data.fill(base);
    for v in image.data.iter_mut() {
        *v = clamp_u8(*v as f64 + rng.uniform_in(-5.0, 5.0));
    }
    let mut mask = Mask::new(size, size);

    let n_blocks = rng.range(cfg.min_blocks, cfg.max_blocks + 1);
    let mut blocks = Vec::with_capacity(n_blocks);
    let ink = clamp_u8(rng.uniform_in(15.0, 60.0));
    for _ in 0..n_blocks {
        let bw = rng.range(size / 6, size / 2);
        let bh = rng.range(size / 12, size / 4);
        let x0 = rng.below(size - bw);
        let y0 = rng.below(size - bh);
        // strokes: slanted dark runs inside the block
        let slant = rng.uniform_in(-0.2, 0.2);
        let line_h = (bh / 4).max(2);
        let mut ly = 0usize;
        while ly + line_h <= bh {
            let mut lx = 0usize;
            while lx + 2 < bw {
                let run = rng.range(2, (bw / 4).max(3));
                if rng.chance(0.85) {
                    for dx in 0..run.min(bw - lx) {
                        let yy = ly as f64 + slant * dx as f64;
                        let yy = yy.clamp(0.0, (bh - 1) as f64) as usize;
                        for t in 0..(line_h * 2 / 3).max(1) {
                            if yy + t < bh {
                                image.set(x0 + lx + dx, y0 + yy + t, ink);
                            }
                        }
                    }
                }
                lx += run + rng.range(1, (bw / 10).max(2));
            }
            ly += line_h + rng.range(1, line_h.max(2));
        }
        // ground truth marks the whole block region
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                mask.set(x, y, 1);
            }
        }
        blocks.push((x0, y0, bw, bh));
    }

    let noise_sigma = rng.uniform_in(cfg.noise_sigma.0, cfg.noise_sigma.1);
    for v in image.data.iter_mut() {
        *v = clamp_u8(*v as f64 + rng.normal() * noise_sigma);
    }

    Ok(Scene {
        image,
        mask,
        provenance: Provenance {
            background_id: 0,
            docs: Vec::new(),
            text_blocks: blocks,
            noise_sigma,
            brightness: 1.0,
            augmentations: Vec::new(),
            seed: 0,
        },
    })
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugOp {
    Noise,
    Brightness,
    Rotation,
    Distortion,
    Zoom,
    Occlusion,
    Resize,
    Flip,
}

impl AugOp {
    pub fn name(self) -> &'static str {
        match self {
            AugOp::Noise => "noise",
            AugOp::Brightness => "brightness",
            AugOp::Rotation => "rotation",
            AugOp::Distortion => "distortion",
            AugOp::Zoom => "zoom",
            AugOp::Occlusion => "occlusion",
            AugOp::Resize => "resize",
            AugOp::Flip => "flip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "noise" => AugOp::Noise,
            "brightness" => AugOp::Brightness,
            "rotation" => AugOp::Rotation,
            "distortion" => AugOp::Distortion,
            "zoom" => AugOp::Zoom,
            "occlusion" => AugOp::Occlusion,
            "resize" => AugOp::Resize,
            "flip" => AugOp::Flip,
            other => return Err(Error::Config(format!("unknown augmentation '{other}'"))),
        })
    }

    pub const ALL: [AugOp; 8] = [
        AugOp::Noise,
        AugOp::Brightness,
        AugOp::Rotation,
        AugOp::Distortion,
        AugOp::Zoom,
        AugOp::Occlusion,
        AugOp::Resize,
        AugOp::Flip,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

pub fn flip_pair(image: &GrayImage, mask: &Mask, axis: FlipAxis) -> (GrayImage, Mask) {
    let (w, h) = (image.w, image.h);
    let mut oi = GrayImage::new(w, h);
    let mut om = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = match axis {
                FlipAxis::Horizontal => (w - 1 - x, y),
                FlipAxis::Vertical => (x, h - 1 - y),
            };
            oi.set(x, y, image.get(sx, sy));
            om.set(x, y, mask.get(sx, sy));
        }
    }
    (oi, om)
}

/// Rotation about the image center. Exact multiples of 90 degrees use a
/// lossless pixel permutation (square canvases); other angles use the
/// warp machinery.
pub fn rotate_pair(image: &GrayImage, mask: &Mask, degrees: f64) -> Result<(GrayImage, Mask)> {
    let (w, h) = (image.w, image.h);
    let quarter_turns = libm::round(degrees / 90.0);
    if libm::fabs(degrees - quarter_turns * 90.0) < 1e-12 && w == h {
        let q = ((quarter_turns as i64 % 4) + 4) % 4;
        let mut oi = GrayImage::new(w, h);
        let mut om = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                // source pixel for output (x, y) under q quarter-turns CCW
                let (sx, sy) = match q {
                    0 => (x, y),
                    1 => (w - 1 - y, x),
                    2 => (w - 1 - x, h - 1 - y),
                    _ => (y, h - 1 - x),
                };
                oi.set(x, y, image.get(sx, sy));
                om.set(x, y, mask.get(sx, sy));
            }
        }
        return Ok((oi, om));
    }
    let rad = degrees * core::f64::consts::PI / 180.0;
    let hgy = Homography::rotation_about(rad, w as f64 / 2.0, h as f64 / 2.0);
    geometric_pair(image, mask, &hgy)
}

/// Apply the same pixel-coordinate homography to image and mask.
pub fn geometric_pair(
    image: &GrayImage,
    mask: &Mask,
    h: &Homography,
) -> Result<(GrayImage, Mask)> {
    let (warped, _) = warp(image, h, image.w, image.h)?;
    let m = warp_mask(mask, h, mask.w, mask.h)?;
    Ok((warped, m))
}

pub fn zoom_pair(image: &GrayImage, mask: &Mask, factor: f64) -> Result<(GrayImage, Mask)> {
    if factor <= 0.0 {
        return Err(Error::Config(format!("zoom factor must be positive, got {factor}")));
    }
    let h = Homography::scale_about(factor, factor, image.w as f64 / 2.0, image.h as f64 / 2.0);
    geometric_pair(image, mask, &h)
}

pub fn resize_pair(image: &GrayImage, mask: &Mask, new_w: usize, new_h: usize) -> Result<(GrayImage, Mask)> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::Config("resize target must be positive".into()));
    }
    let h = Homography::scale(new_w as f64 / image.w as f64, new_h as f64 / image.h as f64);
    let (img, _) = warp(image, &h, new_w, new_h)?;
    let m = warp_mask(mask, &h, new_w, new_h)?;
    Ok((img, m))
}

pub fn occlude_pair(
    image: &GrayImage,
    mask: &Mask,
    rect: (usize, usize, usize, usize),
    value: u8,
    erase_mask: bool,
) -> (GrayImage, Mask) {
    let mut oi = image.clone();
    let mut om = mask.clone();
    let (x0, y0, w, h) = rect;
    for y in y0..(y0 + h).min(image.h) {
        for x in x0..(x0 + w).min(image.w) {
            oi.set(x, y, value);
            if erase_mask {
                om.set(x, y, 0);
            }
        }
    }
    (oi, om)
}

pub fn noise_image(image: &GrayImage, rng: &mut Rng, sigma: f64) -> GrayImage {
    let mut out = image.clone();
    for v in out.data.iter_mut() {
        *v = clamp_u8(*v as f64 + rng.normal() * sigma);
    }
    out
}

pub fn brightness_image(image: &GrayImage, factor: f64, offset: f64) -> GrayImage {
    let mut out = image.clone();
    for v in out.data.iter_mut() {
        *v = clamp_u8(*v as f64 * factor + offset);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentOptions {
    /// When true, occluding patches also clear the covered mask pixels.
    /// Off by default: a covered document is still a document.
    pub occlusion_erases_mask: bool,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            occlusion_erases_mask: false,
        }
    }
}

/// Apply the listed operators in order with randomly drawn parameters.
/// Geometric ops transform image and mask identically (mask stays binary);
/// photometric ops touch the image only. An empty list is the identity.
pub fn augment(
    image: &GrayImage,
    mask: &Mask,
    ops: &[AugOp],
    rng: &mut Rng,
    opts: &AugmentOptions,
) -> Result<(GrayImage, Mask, Vec<String>)> {
    let mut img = image.clone();
    let mut msk = mask.clone();
    let mut applied = Vec::with_capacity(ops.len());
    for &op in ops {
        match op {
            AugOp::Noise => {
                let sigma = rng.uniform_in(2.0, 10.0);
                img = noise_image(&img, rng, sigma);
            }
            AugOp::Brightness => {
                let f = rng.uniform_in(0.7, 1.3);
                let off = rng.uniform_in(-20.0, 20.0);
                img = brightness_image(&img, f, off);
            }
            AugOp::Rotation => {
                let deg = rng.uniform_in(-25.0, 25.0);
                let (i2, m2) = rotate_pair(&img, &msk, deg)?;
                img = i2;
                msk = m2;
            }
            AugOp::Distortion => {
                // mild random perspective: canvas corners jittered up to 5%
                let (w, h) = (img.w as f64, img.h as f64);
                let j = 0.05;
                let mut quad = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
                for p in quad.iter_mut() {
                    p.0 += rng.uniform_in(-j, j) * w;
                    p.1 += rng.uniform_in(-j, j) * h;
                }
                let hg = Homography::unit_square_to_quad(&quad)?
                    .compose(&Homography::scale(1.0 / w, 1.0 / h));
                let (i2, m2) = geometric_pair(&img, &msk, &hg)?;
                img = i2;
                msk = m2;
            }
            AugOp::Zoom => {
                let f = rng.uniform_in(0.8, 1.25);
                let (i2, m2) = zoom_pair(&img, &msk, f)?;
                img = i2;
                msk = m2;
            }
            AugOp::Occlusion => {
                let rw = rng.range(img.w / 8, img.w * 2 / 5);
                let rh = rng.range(img.h / 8, img.h * 2 / 5);
                let x0 = rng.below(img.w - rw);
                let y0 = rng.below(img.h - rh);
                let val = clamp_u8(rng.uniform_in(0.0, 255.0));
                let (i2, m2) =
                    occlude_pair(&img, &msk, (x0, y0, rw, rh), val, opts.occlusion_erases_mask);
                img = i2;
                msk = m2;
            }
            AugOp::Resize => {
                let f = rng.uniform_in(0.7, 1.3);
                let nw = ((img.w as f64 * f) as usize).max(8);
                let nh = ((img.h as f64 * f) as usize).max(8);
                let (i2, m2) = resize_pair(&img, &msk, nw, nh)?;
                img = i2;
                msk = m2;
            }
            AugOp::Flip => {
                let axis = if rng.chance(0.5) {
                    FlipAxis::Horizontal
                } else {
                    FlipAxis::Vertical
                };
                let (i2, m2) = flip_pair(&img, &msk, axis);
                img = i2;
                msk = m2;
            }
        }
        applied.push(op.name().to_string());
    }
    Ok((img, msk, applied))
}

/// Deterministic shuffled split of `n` items by `ratios` (normalized).
/// Every index lands in exactly one part; earlier parts absorb rounding.
pub fn split_indices(n: usize, ratios: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if ratios.is_empty() || ratios.iter().any(|&r| r < 0.0) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::from_seed(crate::rng::child_seed(seed, 0x5911, 0));
    rng.shuffle(&mut order);
    let mut out = Vec::with_capacity(ratios.len());
    let mut taken = 0usize;
    for (i, &r) in ratios.iter().enumerate() {
        let count = if i + 1 == ratios.len() {
            n - taken
        } else {
            libm::round(n as f64 * r / total) as usize
        };
        let count = count.min(n - taken);
        out.push(order[taken..taken + count].to_vec());
        taken += count;
    }
    Ok(out)
}
