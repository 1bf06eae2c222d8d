//! Analytic stand-in renderer for a side-lit box room.
//!
//! Sky: gradated overcast `R = R_z (1 + 2 cos ζ)/3` normalized so its
//! horizontal illuminance equals the diffuse irradiance, plus a solar disc
//! carrying the direct normal irradiance. Interior: direct sun through the
//! window aperture, the window's form factor times the mean exterior
//! radiance, and one constant ambient term.
//!
//! Room frame (meters): +x west, +y south, +z up; the south wall is the plane
//! `y = 0`, the room spans `x ∈ [−w/2, w/2]`, `y ∈ [−depth, 0]`, `z ∈ [0, h]`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_index, write_sample, SampleSource, SampleTriple};
use crate::error::{Error, Result};
use crate::hdrio::{LuminanceMap, LUMINOUS_EFFICACY};
use crate::skyctx::SkyState;
use crate::spherical::{
    cross, direction_grid, direction_to_pixel, dot, norm, pixel_sample_direction, solid_angle_map, Vec3,
};

/// Solid angle of the solar disc (sr).
pub const SUN_SOLID_ANGLE: f64 = 6.8e-5;
/// Angular radius of the solar disc (degrees).
pub const SUN_RADIUS_DEG: f64 = 0.266;
/// Rays per pixel side for the direct term.
pub const DIRECT_SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    /// Horizontal offset of the window center from the room centerline (m).
    pub center_x: f64,
    /// Height of the window center above the floor (m).
    pub center_z: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            center_x: 0.0,
            center_z: 2.0,
            width: 5.0,
            height: 2.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub room_width: f64,
    pub room_depth: f64,
    pub room_height: f64,
    pub window: WindowSpec,
    pub rho_wall: f64,
    pub rho_ceiling: f64,
    pub rho_floor: f64,
    pub rho_ground: f64,
    /// Camera offset from the centerline (m, +west).
    pub camera_x: f64,
    /// Camera distance from the south (window) wall (m).
    pub camera_distance: f64,
    /// Camera height (m).
    pub camera_height: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            room_width: 6.0,
            room_depth: 14.0,
            room_height: 4.5,
            window: WindowSpec::default(),
            rho_wall: 0.5,
            rho_ceiling: 0.8,
            rho_floor: 0.2,
            rho_ground: 0.2,
            camera_x: 0.0,
            camera_distance: 1.0,
            camera_height: 1.6,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (w, d, h) = (self.room_width, self.room_depth, self.room_height);
        if !(w > 0.0 && d > 0.0 && h > 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        for (name, r) in [
            ("rho_wall", self.rho_wall),
            ("rho_ceiling", self.rho_ceiling),
            ("rho_floor", self.rho_floor),
            ("rho_ground", self.rho_ground),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} = {r} outside [0, 1]")));
            }
        }
        let win = &self.window;
        if !(win.width > 0.0 && win.height > 0.0)
            || win.center_x - win.width / 2.0 < -w / 2.0
            || win.center_x + win.width / 2.0 > w / 2.0
            || win.center_z - win.height / 2.0 < 0.0
            || win.center_z + win.height / 2.0 > h
        {
            return Err(Error::invalid("window must lie inside the south wall"));
        }
        let inside = self.camera_x.abs() < w / 2.0
            && self.camera_distance > 0.0
            && self.camera_distance < d
            && self.camera_height > 0.0
            && self.camera_height < h;
        if !inside {
            return Err(Error::invalid("camera must be inside the room"));
        }
        Ok(())
    }

    fn camera(&self) -> Vec3 {
        [self.camera_x, -self.camera_distance, self.camera_height]
    }

    fn window_area(&self) -> f64 {
        self.window.width * self.window.height
    }

    fn in_window(&self, x: f64, z: f64) -> bool {
        let w = &self.window;
        (x - w.center_x).abs() <= w.width / 2.0 && (z - w.center_z).abs() <= w.height / 2.0
    }

    /// Window corners, counter-clockwise seen from inside.
    fn window_corners(&self) -> [Vec3; 4] {
        let w = &self.window;
        let (x0, x1) = (w.center_x - w.width / 2.0, w.center_x + w.width / 2.0);
        let (z0, z1) = (w.center_z - w.height / 2.0, w.center_z + w.height / 2.0);
        [[x0, 0.0, z0], [x1, 0.0, z0], [x1, 0.0, z1], [x0, 0.0, z1]]
    }

    /// `(total interior surface area, area-weighted mean reflectance)`.
    fn surface_stats(&self) -> (f64, f64) {
        let (w, d, h) = (self.room_width, self.room_depth, self.room_height);
        let floor = w * d;
        let walls = 2.0 * (w + d) * h - self.window_area();
        let total = 2.0 * floor + walls;
        let mean = (floor * self.rho_floor + floor * self.rho_ceiling + walls * self.rho_wall) / total;
        (total, mean)
    }
}

/// Sky parameters for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSky {
    pub dni: f64,
    pub dhi: f64,
    /// Zenith radiance, W·m⁻²·sr⁻¹.
    pub zenith: f64,
    /// Solar disc radiance, W·m⁻²·sr⁻¹.
    pub sun: f64,
    pub sun_dir: Vec3,
    pub sun_up: bool,
    /// Radiance of the ground below the horizon.
    pub ground: f64,
}

impl OracleSky {
    pub fn new(state: &SkyState, rho_ground: f64) -> Self {
        let sun_dir = state.sun_direction();
        let sun_up = state.altitude > 0.0;
        let dni = if sun_up { state.dni } else { 0.0 };
        let global = state.dhi + dni * sun_dir[2].max(0.0);
        Self {
            dni,
            dhi: state.dhi,
            zenith: 9.0 * state.dhi / (7.0 * PI),
            sun: dni / SUN_SOLID_ANGLE,
            sun_dir,
            sun_up,
            ground: rho_ground * global / PI,
        }
    }

    /// Sky (or ground) radiance without the solar disc.
    pub fn diffuse_radiance(&self, d: Vec3) -> f64 {
        if d[2] > 0.0 {
            self.zenith * (1.0 + 2.0 * d[2]) / 3.0
        } else {
            self.ground
        }
    }

    /// Mean cosine-weighted exterior radiance seen through a vertical
    /// south-facing aperture (sun excluded), in closed form.
    pub fn window_mean_radiance(&self) -> f64 {
        // ∫ over the south half-sphere above the horizon of (1+2z)/3 · y dω = (π/2 + 4/3)/3
        let sky = self.zenith * (PI / 2.0 + 4.0 / 3.0) / 3.0;
        let ground = self.ground * PI / 2.0;
        (sky + ground) / PI
    }
}

/// Point radiance of the sky model, including the solar disc.
pub fn sky_radiance(sky: &OracleSky, d: Vec3) -> f64 {
    let mut r = sky.diffuse_radiance(d);
    if sky.sun_up && d[2] > 0.0 {
        let c = dot(d, sky.sun_dir) / norm(d);
        if c >= SUN_RADIUS_DEG.to_radians().cos() {
            r += sky.sun;
        }
    }
    r
}

/// Differential-area-to-polygon form factor (Lambert's contour formula).
pub fn point_polygon_form_factor(p: Vec3, n: Vec3, poly: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    for k in 0..poly.len() {
        let a = sub(poly[k], p);
        let b = sub(poly[(k + 1) % poly.len()], p);
        let (la, lb) = (norm(a), norm(b));
        let c = cross(a, b);
        let lc = norm(c);
        if lc < 1e-15 {
            continue;
        }
        let gamma = (dot(a, b) / (la * lb)).clamp(-1.0, 1.0).acos();
        sum += gamma * dot(n, c) / lc;
    }
    (sum / (2.0 * PI)).abs()
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

enum Hit {
    Window,
    Surface { point: Vec3, normal: Vec3, rho: f64 },
}

impl SceneSpec {
    fn cast(&self, origin: Vec3, d: Vec3) -> Hit {
        let hw = self.room_width / 2.0;
        let mut best = (f64::INFINITY, 0usize);
        let planes: [(usize, f64); 6] = [
            (0, hw),
            (0, -hw),
            (1, 0.0),
            (1, -self.room_depth),
            (2, 0.0),
            (2, self.room_height),
        ];
        for (k, &(axis, value)) in planes.iter().enumerate() {
            if d[axis].abs() < 1e-15 {
                continue;
            }
            let t = (value - origin[axis]) / d[axis];
            if t > 1e-12 && t < best.0 {
                best = (t, k);
            }
        }
        let t = best.0;
        let point = [origin[0] + t * d[0], origin[1] + t * d[1], origin[2] + t * d[2]];
        let (normal, rho) = match best.1 {
            0 => ([-1.0, 0.0, 0.0], self.rho_wall),
            1 => ([1.0, 0.0, 0.0], self.rho_wall),
            2 => {
                if self.in_window(point[0], point[2]) {
                    return Hit::Window;
                }
                ([0.0, -1.0, 0.0], self.rho_wall)
            }
            3 => ([0.0, 1.0, 0.0], self.rho_wall),
            4 => ([0.0, 0.0, 1.0], self.rho_floor),
            _ => ([0.0, 0.0, -1.0], self.rho_ceiling),
        };
        Hit::Surface { point, normal, rho }
    }

    /// Whether the sun reaches `p` through the window aperture.
    fn sun_reaches(&self, p: Vec3, s: Vec3) -> bool {
        if s[1] <= 1e-12 || p[1] >= -1e-9 {
            return false;
        }
        let t = -p[1] / s[1];
        self.in_window(p[0] + t * s[0], p[2] + t * s[2])
    }
}

/// Renders the interior, sky and sun-patch panoramas for one state.
///
/// The direct term is box filtered over `DIRECT_SUBSAMPLES²` rays per pixel
/// and the solar disc flux is split bilinearly among the four pixel centers
/// around the sun direction, so all maps vary continuously with sun position.
pub fn render_triple(scene: &SceneSpec, state: &SkyState, width: usize, height: usize) -> Result<SampleTriple> {
    scene.validate()?;
    if width < 2 || height < 2 {
        return Err(Error::invalid(format!("render size {width}x{height} below 2x2")));
    }
    let sky = OracleSky::new(state, scene.rho_ground);
    let omega = solid_angle_map(width, height)?;
    let dirs = direction_grid(width, height);
    let n = width * height;
    let cam = scene.camera();

    let window_mean = sky.window_mean_radiance();
    let sun_on_window = sky.dni * sky.sun_dir[1].max(0.0);
    let window_irr_diffuse = PI * window_mean;
    let (area, rho_mean) = scene.surface_stats();
    let flux = scene.window_area() * (window_irr_diffuse + sun_on_window);
    let ambient = flux * rho_mean / (area * (1.0 - rho_mean));
    let corners = scene.window_corners();

    let mut sky_rad = vec![0.0; n];
    let mut sun_rad = vec![0.0; n];
    let mut int_rad = vec![0.0; n];
    for i in 0..n {
        let d = dirs[i];
        sky_rad[i] = sky.diffuse_radiance(d);
        match scene.cast(cam, d) {
            Hit::Window => {
                int_rad[i] = sky_rad[i];
            }
            Hit::Surface { point, normal, rho } => {
                let diffuse = if point[1] > -1e-9 {
                    0.0
                } else {
                    window_irr_diffuse * point_polygon_form_factor(point, normal, &corners)
                };
                int_rad[i] = rho / PI * (diffuse + ambient);
            }
        }
        if sky.sun_up && sky.dni > 0.0 {
            let (x, y) = (i % width, i / width);
            let mut sum = 0.0;
            for a in 0..DIRECT_SUBSAMPLES {
                for b in 0..DIRECT_SUBSAMPLES {
                    let u = (a as f64 + 0.5) / DIRECT_SUBSAMPLES as f64;
                    let v = (b as f64 + 0.5) / DIRECT_SUBSAMPLES as f64;
                    let ds = pixel_sample_direction(x, y, u, v, width, height);
                    if let Hit::Surface { point, normal, rho } = scene.cast(cam, ds) {
                        let c = dot(normal, sky.sun_dir);
                        if c > 0.0 && scene.sun_reaches(point, sky.sun_dir) {
                            sum += rho / PI * sky.dni * c;
                        }
                    }
                }
            }
            let direct = sum / (DIRECT_SUBSAMPLES * DIRECT_SUBSAMPLES) as f64;
            sun_rad[i] = direct;
            int_rad[i] += direct;
        }
    }

    if sky.sun_up && sky.dni > 0.0 {
        let through_window = matches!(scene.cast(cam, sky.sun_dir), Hit::Window);
        for (i, weight) in bilinear_splat(sky.sun_dir, width, height) {
            let disc = weight * sky.dni / omega.at(i);
            sky_rad[i] += disc;
            if through_window {
                sun_rad[i] += disc;
                int_rad[i] += disc;
            }
        }
    }

    let to_map = |rad: Vec<f64>| {
        LuminanceMap::new(width, height, rad.into_iter().map(|r| r * LUMINOUS_EFFICACY).collect())
    };
    Ok(SampleTriple {
        state: *state,
        interior: to_map(int_rad)?,
        sky: to_map(sky_rad)?,
        sunpatch: to_map(sun_rad)?,
    })
}

/// Pixel indices and bilinear weights of the four pixel centers around `d`;
/// rows clamp at the poles and columns wrap.
fn bilinear_splat(d: Vec3, width: usize, height: usize) -> [(usize, f64); 4] {
    let (px, py) = direction_to_pixel(d, width, height);
    let py = py.clamp(0.0, (height - 1) as f64);
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let col = |k: f64| (k as i64).rem_euclid(width as i64) as usize;
    let row = |k: f64| (k as usize).min(height - 1);
    [
        (row(y0) * width + col(x0), (1.0 - fx) * (1.0 - fy)),
        (row(y0) * width + col(x0 + 1.0), fx * (1.0 - fy)),
        (row(y0 + 1.0) * width + col(x0), (1.0 - fx) * fy),
        (row(y0 + 1.0) * width + col(x0 + 1.0), fx * fy),
    ]
}

/// A dataset rendered on demand.
#[derive(Debug, Clone)]
pub struct OracleDataset {
    scene: SceneSpec,
    states: Vec<SkyState>,
    dims: (usize, usize),
}

impl OracleDataset {
    pub fn new(scene: SceneSpec, states: Vec<SkyState>, width: usize, height: usize) -> Result<Self> {
        scene.validate()?;
        if width < 2 || height < 2 {
            return Err(Error::invalid("render size below 2x2"));
        }
        Ok(Self {
            scene,
            states,
            dims: (width, height),
        })
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }
}

impl SampleSource for OracleDataset {
    fn states(&self) -> &[SkyState] {
        &self.states
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn sample(&self, index: usize) -> Result<SampleTriple> {
        let state = self
            .states
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))?;
        render_triple(&self.scene, state, self.dims.0, self.dims.1)
    }
}

/// Renders every state into `out_dir` (three HDR files each) and writes
/// `index.csv`.
pub fn generate_dataset(
    scene: &SceneSpec,
    states: &[SkyState],
    width: usize,
    height: usize,
    out_dir: &Path,
) -> Result<()> {
    scene.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let render_one = |s: &SkyState| -> Result<()> {
        let triple = render_triple(scene, s, width, height)?;
        write_sample(out_dir, &triple)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        states.par_iter().try_for_each(render_one)?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        states.iter().try_for_each(render_one)?;
    }
    write_index(out_dir, states)
}
