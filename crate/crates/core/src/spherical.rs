//! Equirectangular panorama geometry.
//!
//! Frame: +y is panorama forward (the image center column), +z is up and +x
//! is to the right of forward. Column 0 starts at longitude −π, row 0 at the
//! zenith.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::hdrio::LuminanceMap;

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Direction through continuous panorama coordinates `(px, py)`, using the
/// pixel-center convention (`px + 0.5`).
pub fn pixel_direction(px: f64, py: f64, width: usize, height: usize) -> Result<Vec3> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("panorama dimensions must be positive"));
    }
    if !(0.0..width as f64).contains(&px) || !(0.0..height as f64).contains(&py) {
        return Err(Error::invalid(format!(
            "pixel ({px}, {py}) outside {width}x{height}"
        )));
    }
    Ok(direction_unchecked(px, py, width, height))
}

fn direction_unchecked(px: f64, py: f64, width: usize, height: usize) -> Vec3 {
    let lon = (px + 0.5) / width as f64 * 2.0 * PI - PI;
    let lat = FRAC_PI_2 - (py + 0.5) / height as f64 * PI;
    [lat.cos() * lon.sin(), lat.cos() * lon.cos(), lat.sin()]
}

/// Direction at fractional offset `(u, v)` ∈ [0, 1)² inside pixel `(x, y)`.
pub fn pixel_sample_direction(x: usize, y: usize, u: f64, v: f64, width: usize, height: usize) -> Vec3 {
    direction_unchecked(x as f64 + u - 0.5, y as f64 + v - 0.5, width, height)
}

/// Continuous `(px, py)` whose pixel-center direction is `d` (inverse of
/// [`pixel_direction`], not range-reduced).
pub fn direction_to_pixel(d: Vec3, width: usize, height: usize) -> (f64, f64) {
    let lon = d[0].atan2(d[1]);
    let lat = d[2].clamp(-1.0, 1.0).asin();
    let px = (lon + PI) / (2.0 * PI) * width as f64 - 0.5;
    let py = (FRAC_PI_2 - lat) / PI * height as f64 - 0.5;
    (px, py)
}

/// Integer pixel containing direction `d`.
pub fn pixel_of_direction(d: Vec3, width: usize, height: usize) -> (usize, usize) {
    let (px, py) = direction_to_pixel(d, width, height);
    let x = ((px + 0.5).floor() as i64).rem_euclid(width as i64) as usize;
    let y = ((py + 0.5).floor().max(0.0) as usize).min(height - 1);
    (x, y)
}

/// Pixel-center unit directions for every pixel, row-major.
pub fn direction_grid(width: usize, height: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(direction_unchecked(x as f64, y as f64, width, height));
        }
    }
    out
}

/// Per-row solid angles of an equirectangular panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidAngleMap {
    width: usize,
    height: usize,
    rows: Vec<f64>,
}

impl SolidAngleMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Solid angle of any pixel in row `y`.
    pub fn row(&self, y: usize) -> f64 {
        self.rows[y]
    }

    pub fn at(&self, index: usize) -> f64 {
        self.rows[index / self.width]
    }

    /// Σω over every pixel.
    pub fn total(&self) -> f64 {
        self.rows.iter().sum::<f64>() * self.width as f64
    }

    /// Row-major ω for all pixels.
    pub fn per_pixel(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w, self.width))
            .collect()
    }
}

/// Exact band integral: `ω = (2π/W)(sin φ_top − sin φ_bottom)`.
pub fn solid_angle_map(width: usize, height: usize) -> Result<SolidAngleMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("panorama dimensions must be positive"));
    }
    let dlon = 2.0 * PI / width as f64;
    let rows = (0..height)
        .map(|y| {
            let top = FRAC_PI_2 - y as f64 * PI / height as f64;
            let bottom = FRAC_PI_2 - (y + 1) as f64 * PI / height as f64;
            dlon * (top.sin() - bottom.sin())
        })
        .collect();
    Ok(SolidAngleMap {
        width,
        height,
        rows,
    })
}

/// Horizontal unit view axis at `yaw_deg`, clockwise from forward seen from above.
pub fn view_axis(yaw_deg: f64) -> Vec3 {
    let yaw = yaw_deg.rem_euclid(360.0).to_radians();
    [yaw.sin(), yaw.cos(), 0.0]
}

/// Bilinear panorama lookup with horizontal wrap and vertical clamp.
pub fn sample_bilinear(pan: &LuminanceMap, px: f64, py: f64) -> f64 {
    let w = pan.width() as i64;
    let h = pan.height() as i64;
    let py = py.clamp(0.0, (h - 1) as f64);
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let x0 = x0 as i64;
    let y0 = y0 as i64;
    let xa = x0.rem_euclid(w) as usize;
    let xb = (x0 + 1).rem_euclid(w) as usize;
    let ya = y0 as usize;
    let yb = (y0 + 1).min(h - 1) as usize;
    let top = pan.get(xa, ya) * (1.0 - fx) + pan.get(xb, ya) * fx;
    let bot = pan.get(xa, yb) * (1.0 - fx) + pan.get(xb, yb) * fx;
    top * (1.0 - fy) + bot * fy
}

/// An equidistant 180° fisheye view.
#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeImage {
    pub size: usize,
    pub yaw: f64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FisheyeImage {
    pub fn to_luminance_map(&self) -> LuminanceMap {
        LuminanceMap::new(self.size, self.size, self.values.clone())
            .expect("fisheye values are finite and sized")
    }
}

/// Extracts an equi-angular fisheye facing `yaw_deg`.
pub fn panorama_to_fisheye(pan: &LuminanceMap, yaw_deg: f64, size: usize) -> Result<FisheyeImage> {
    if size < 2 {
        return Err(Error::invalid(format!("fisheye size must be ≥ 2, got {size}")));
    }
    let axis = view_axis(yaw_deg);
    let up = [0.0, 0.0, 1.0];
    let right = cross(axis, up);
    let half = size as f64 / 2.0;
    let mut values = vec![0.0; size * size];
    let mut valid = vec![false; size * size];
    for j in 0..size {
        for i in 0..size {
            let u = (i as f64 + 0.5 - half) / half;
            let v = (half - (j as f64 + 0.5)) / half;
            let r = (u * u + v * v).sqrt();
            if r > 1.0 {
                continue;
            }
            let theta = r * FRAC_PI_2;
            let (st, ct) = theta.sin_cos();
            let (cp, sp) = if r > 0.0 { (u / r, v / r) } else { (1.0, 0.0) };
            let d = [
                ct * axis[0] + st * (cp * right[0] + sp * up[0]),
                ct * axis[1] + st * (cp * right[1] + sp * up[1]),
                ct * axis[2] + st * (cp * right[2] + sp * up[2]),
            ];
            let (px, py) = direction_to_pixel(d, pan.width(), pan.height());
            values[j * size + i] = sample_bilinear(pan, px, py);
            valid[j * size + i] = true;
        }
    }
    Ok(FisheyeImage {
        size,
        yaw: yaw_deg,
        values,
        valid,
    })
}

/// Vertical illuminance (lux) at the eye facing `yaw_deg`:
/// `E_v = Σ L ω (d·a)` over the forward hemisphere.
pub fn vertical_illuminance(pan: &LuminanceMap, yaw_deg: f64) -> f64 {
    let omega = solid_angle_map(pan.width(), pan.height()).expect("valid map dims");
    let dirs = direction_grid(pan.width(), pan.height());
    vertical_illuminance_with(pan, yaw_deg, &omega, &dirs)
}

/// [`vertical_illuminance`] with precomputed geometry.
pub fn vertical_illuminance_with(
    pan: &LuminanceMap,
    yaw_deg: f64,
    omega: &SolidAngleMap,
    dirs: &[Vec3],
) -> f64 {
    let axis = view_axis(yaw_deg);
    pan.values()
        .iter()
        .zip(dirs)
        .enumerate()
        .filter_map(|(i, (&l, &d))| {
            let c = dot(d, axis);
            (c > 0.0).then(|| l * omega.at(i) * c)
        })
        .sum()
}
