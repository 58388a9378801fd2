//! Classical greedy active contour for open curves on grayscale images.
//!
//! Energy of a contour `v_0 .. v_{n-1}`:
//!
//! ```text
//! E = alpha * sum (|v_i - v_{i-1}| - d0)^2          continuity
//!   + beta  * sum |v_{i-1} - 2 v_i + v_{i+1}|^2      curvature
//!   - gamma * sum G(v_i)                             edge attraction
//! ```
//!
//! where `d0` is the mean spacing of the initial contour and `G` is the
//! gradient magnitude of the Gaussian-smoothed image normalised to `[0, 1]`.
//! Each iteration visits every point and moves it to the lowest-energy pixel
//! offset in its neighbourhood, only when that strictly lowers `E`, so the
//! total energy never increases.

use std::path::Path;

use super::{Contour2D, Vec2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Image(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    /// Loads a PGM (P2 or P5) image, scaled to `[0, 1]`.
    pub fn load_pgm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let luma = img.to_luma32f();
        let (w, h) = luma.dimensions();
        Self::new(
            w as usize,
            h as usize,
            luma.into_raw().into_iter().map(f64::from).collect(),
        )
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// Bilinear sample; `p` must lie inside the image.
    pub fn sample(&self, p: &Vec2) -> f64 {
        let x0 = (p.x.floor() as usize).min(self.width - 1);
        let y0 = (p.y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (p.x - x0 as f64, p.y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn blurred(&self, sigma: f64) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let pass = |img: &GrayImage, horizontal: bool| {
            GrayImage::from_fn(img.width, img.height, |x, y| {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    acc += w * if horizontal {
                        img.get_clamped(x as isize + off, y as isize)
                    } else {
                        img.get_clamped(x as isize, y as isize + off)
                    };
                }
                acc / norm
            })
        };
        pass(&pass(self, true), false)
    }

    /// Central-difference gradient magnitude, normalised by its maximum.
    fn edge_map(&self, sigma: f64) -> GrayImage {
        let s = self.blurred(sigma);
        let mut g = GrayImage::from_fn(s.width, s.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            let gx = 0.5 * (s.get_clamped(x + 1, y) - s.get_clamped(x - 1, y));
            let gy = 0.5 * (s.get_clamped(x, y + 1) - s.get_clamped(x, y - 1));
            gx.hypot(gy)
        });
        let max = g.data.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            g.data.iter_mut().for_each(|v| *v /= max);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnakeParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub blur_sigma: f64,
    /// Neighbourhood half-width in pixels.
    pub search_radius: usize,
    pub max_iterations: usize,
}

impl Default for SnakeParams {
    fn default() -> Self {
        SnakeParams {
            alpha: 0.05,
            beta: 0.1,
            gamma: 1.0,
            blur_sigma: 1.0,
            search_radius: 1,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnakeResult {
    pub contour: Contour2D,
    pub iterations: usize,
    /// Total energy before the first iteration and after each one.
    pub energy: Vec<f64>,
}

struct Energy<'a> {
    p: &'a SnakeParams,
    edges: &'a GrayImage,
    d0: f64,
}

impl Energy<'_> {
    fn continuity(&self, a: &Vec2, b: &Vec2) -> f64 {
        let d = (b - a).norm() - self.d0;
        self.p.alpha * d * d
    }

    fn curvature(&self, a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
        self.p.beta * (a - b * 2.0 + c).norm_squared()
    }

    fn external(&self, a: &Vec2) -> f64 {
        -self.p.gamma * self.edges.sample(a)
    }

    fn total(&self, v: &[Vec2]) -> f64 {
        let mut e: f64 = v.iter().map(|p| self.external(p)).sum();
        for w in v.windows(2) {
            e += self.continuity(&w[0], &w[1]);
        }
        for w in v.windows(3) {
            e += self.curvature(&w[0], &w[1], &w[2]);
        }
        e
    }

    /// Every term of the total energy that depends on point `i`.
    fn local(&self, v: &[Vec2], i: usize, at: &Vec2) -> f64 {
        let n = v.len();
        let pt = |k: usize| if k == i { *at } else { v[k] };
        let mut e = self.external(at);
        if i > 0 {
            e += self.continuity(&v[i - 1], at);
        }
        if i + 1 < n {
            e += self.continuity(at, &v[i + 1]);
        }
        for c in i.saturating_sub(1)..=(i + 1).min(n - 1) {
            if c >= 1 && c + 1 < n {
                e += self.curvature(&pt(c - 1), &pt(c), &pt(c + 1));
            }
        }
        e
    }
}

/// Greedy snake starting from `init`; stops at the iteration cap or when an
/// iteration moves no point.
pub fn snake_extract(image: &GrayImage, init: &Contour2D, params: &SnakeParams) -> Result<SnakeResult> {
    if let Some(i) = init.points().iter().position(|p| !image.contains(p)) {
        return Err(Error::Contour(format!(
            "initial point {i} {:?} lies outside the {}x{} image",
            init.points()[i],
            image.width,
            image.height
        )));
    }
    let edges = image.edge_map(params.blur_sigma);
    let energy = Energy {
        p: params,
        edges: &edges,
        d0: init.arc_length() / (init.len() - 1) as f64,
    };
    let mut v = init.points().to_vec();
    let mut history = vec![energy.total(&v)];
    let r = params.search_radius as isize;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        let mut moved = 0;
        for i in 0..v.len() {
            let current = energy.local(&v, i, &v[i]);
            let mut best = (current, v[i]);
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let cand = v[i] + Vec2::new(dx as f64, dy as f64);
                    if !image.contains(&cand) || (i > 0 && cand == v[i - 1]) || (i + 1 < v.len() && cand == v[i + 1]) {
                        continue;
                    }
                    let e = energy.local(&v, i, &cand);
                    if e < best.0 {
                        best = (e, cand);
                    }
                }
            }
            if best.0 < current - 1e-12 * current.abs().max(1.0) {
                v[i] = best.1;
                moved += 1;
            }
        }
        history.push(energy.total(&v));
        if moved == 0 {
            break;
        }
    }

    Ok(SnakeResult {
        contour: Contour2D::new(v)?,
        iterations,
        energy: history,
    })
}
