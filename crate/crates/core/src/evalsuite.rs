//! Evaluation metrics: log-luminance pixel errors, glare sources and DGP,
//! RAMMG contrast, correlation reports and the irradiance joint histogram.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::{SampleSource, SampleTriple};
use crate::error::{Error, Result};
use crate::hdrio::{LuminanceMap, MAX_LUMINANCE};
use crate::mlpnet::Model;
use crate::skyctx::SkyState;
use crate::spherical::{direction_grid, dot, normalize, solid_angle_map, view_axis, vertical_illuminance_with, SolidAngleMap, Vec3};

/// Metric clamp floor (cd/m²); log10 values start at 0.
pub const METRIC_FLOOR: f64 = 1.0;
/// Glare threshold as a multiple of the adaptation luminance.
pub const DEFAULT_GLARE_FACTOR: f64 = 5.0;
pub const DEFAULT_RAMMG_LEVELS: usize = 5;
/// Ten yaws, 36° apart.
pub const DEFAULT_YAWS: [f64; 10] = [0.0, 36.0, 72.0, 108.0, 144.0, 180.0, 216.0, 252.0, 288.0, 324.0];

fn metric_log(l: f64) -> f64 {
    l.clamp(METRIC_FLOOR, MAX_LUMINANCE).log10()
}

/// Per-pixel directions and solid angles of one panorama size.
#[derive(Debug, Clone)]
pub struct PanoramaGeometry {
    pub omega: SolidAngleMap,
    pub dirs: Vec<Vec3>,
}

impl PanoramaGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            omega: solid_angle_map(width, height)?,
            dirs: direction_grid(width, height),
        })
    }

    fn check(&self, map: &LuminanceMap) -> Result<()> {
        if (map.width(), map.height()) != (self.omega.width(), self.omega.height()) {
            return Err(Error::data(format!(
                "map is {}x{}, geometry is {}x{}",
                map.width(),
                map.height(),
                self.omega.width(),
                self.omega.height()
            )));
        }
        Ok(())
    }
}

/// `(log10 MSE, log10 RER)`, solid-angle weighted, after clamping both maps
/// to `[1, 1.6e9]` cd/m².
pub fn pixel_errors(pred: &LuminanceMap, truth: &LuminanceMap) -> Result<(f64, f64)> {
    if !pred.same_dims(truth) {
        return Err(Error::data(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let omega = solid_angle_map(pred.width(), pred.height())?;
    let (mut se, mut w, mut tt) = (0.0, 0.0, 0.0);
    for (i, (&p, &t)) in pred.values().iter().zip(truth.values()).enumerate() {
        let (y, t) = (metric_log(p), metric_log(t));
        let o = omega.at(i);
        se += o * (y - t) * (y - t);
        w += o;
        tt += o * t * t;
    }
    let rer = if tt > 0.0 { (se / tt).sqrt() } else { 0.0 };
    Ok((se / w, rer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlareSource {
    pub pixels: Vec<usize>,
    /// Solid-angle-weighted mean luminance (cd/m²).
    pub luminance: f64,
    /// sr.
    pub solid_angle: f64,
    pub direction: Vec3,
    pub position_index: f64,
}

/// Guth position index for a source at `sigma_deg` from the view axis and
/// `tau_deg` from the vertical plane through it, floored at 1.
pub fn guth_position_index(sigma_deg: f64, tau_deg: f64) -> f64 {
    let (s, t) = (sigma_deg, tau_deg);
    let e = (35.2 - 0.31889 * t - 1.22 * (-2.0 * t / 9.0).exp()) * 1e-3 * s
        + (21.0 + 0.26667 * t - 0.002963 * t * t) * 1e-5 * s * s;
    e.exp().max(1.0)
}

/// `(σ, τ)` in degrees for direction `d` seen along horizontal `axis`.
/// Sources below the line of sight mirror onto the upper half.
pub fn source_angles(axis: Vec3, d: Vec3) -> (f64, f64) {
    let d = normalize(d);
    let sigma = dot(d, axis).clamp(-1.0, 1.0).acos().to_degrees();
    let up = [0.0, 0.0, 1.0];
    let right = [axis[1], -axis[0], 0.0];
    let c = dot(d, axis);
    let p = [d[0] - c * axis[0], d[1] - c * axis[1], d[2] - c * axis[2]];
    let (pu, pr) = (dot(p, up), dot(p, right));
    let tau = if pu == 0.0 && pr == 0.0 { 0.0 } else { pr.abs().atan2(pu.abs()).to_degrees() };
    (sigma, tau)
}

/// Connected regions (8-neighborhood, horizontal wrap) of forward-hemisphere
/// pixels brighter than `factor · E_v/π`.
pub fn detect_glare_sources_with(
    pan: &LuminanceMap,
    yaw_deg: f64,
    geom: &PanoramaGeometry,
    factor: f64,
) -> Result<Vec<GlareSource>> {
    geom.check(pan)?;
    let ev = vertical_illuminance_with(pan, yaw_deg, &geom.omega, &geom.dirs);
    Ok(sources_for(pan, yaw_deg, geom, factor, ev))
}

/// [`detect_glare_sources_with`] with the default factor.
pub fn detect_glare_sources(pan: &LuminanceMap, yaw_deg: f64) -> Vec<GlareSource> {
    let geom = PanoramaGeometry::new(pan.width(), pan.height()).expect("valid map dims");
    detect_glare_sources_with(pan, yaw_deg, &geom, DEFAULT_GLARE_FACTOR).expect("geometry matches")
}

fn sources_for(pan: &LuminanceMap, yaw_deg: f64, geom: &PanoramaGeometry, factor: f64, ev: f64) -> Vec<GlareSource> {
    if ev <= 0.0 {
        return Vec::new();
    }
    let (w, h) = (pan.width(), pan.height());
    let axis = view_axis(yaw_deg);
    let threshold = factor * ev / PI;
    let vals = pan.values();
    let glare: Vec<bool> = (0..w * h)
        .map(|i| dot(geom.dirs[i], axis) > 0.0 && vals[i] > threshold)
        .collect();
    let mut seen = vec![false; w * h];
    let mut sources = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !glare[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                let ny = y + dy;
                if ny < 0 || ny >= h as i64 {
                    continue;
                }
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (x + dx).rem_euclid(w as i64);
                    let j = ny as usize * w + nx as usize;
                    if glare[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let mut omega = 0.0;
        let mut flux = 0.0;
        let mut dir = [0.0; 3];
        for &i in &pixels {
            let o = geom.omega.at(i);
            omega += o;
            flux += vals[i] * o;
            for k in 0..3 {
                dir[k] += o * geom.dirs[i][k];
            }
        }
        let direction = normalize(dir);
        let (sigma, tau) = source_angles(axis, direction);
        sources.push(GlareSource {
            pixels,
            luminance: flux / omega,
            solid_angle: omega,
            direction,
            position_index: guth_position_index(sigma, tau),
        });
    }
    sources
}

/// Daylight glare probability for the view at `yaw_deg`, clamped to `[0, 1]`.
pub fn dgp_with(pan: &LuminanceMap, yaw_deg: f64, geom: &PanoramaGeometry, factor: f64) -> Result<f64> {
    geom.check(pan)?;
    let ev = vertical_illuminance_with(pan, yaw_deg, &geom.omega, &geom.dirs);
    if ev <= 0.0 {
        return Ok(0.16);
    }
    let sum: f64 = sources_for(pan, yaw_deg, geom, factor, ev)
        .iter()
        .map(|s| s.luminance * s.luminance * s.solid_angle / (ev.powf(1.87) * s.position_index * s.position_index))
        .sum();
    Ok((5.87e-5 * ev + 9.18e-2 * (1.0 + sum).log10() + 0.16).clamp(0.0, 1.0))
}

/// [`dgp_with`] with default geometry and glare factor.
pub fn dgp(pan: &LuminanceMap, yaw_deg: f64) -> f64 {
    let geom = PanoramaGeometry::new(pan.width(), pan.height()).expect("valid map dims");
    dgp_with(pan, yaw_deg, &geom, DEFAULT_GLARE_FACTOR).expect("geometry matches")
}

/// Mean 8-neighbor absolute log10 difference, averaged over up to `levels`
/// levels of a 2×2 box pyramid.
pub fn rammg(map: &LuminanceMap, levels: usize) -> Result<f64> {
    if levels == 0 {
        return Err(Error::invalid("rammg needs at least one level"));
    }
    if map.width() < 2 || map.height() < 2 {
        return Err(Error::invalid(format!(
            "rammg needs at least 2x2, got {}x{}",
            map.width(),
            map.height()
        )));
    }
    let v: Vec<f64> = map.values().iter().map(|&l| metric_log(l)).collect();
    Ok(rammg_values(v, map.width(), map.height(), levels))
}

/// RAMMG on an already log-transformed value grid.
pub fn rammg_values(mut v: Vec<f64>, mut w: usize, mut h: usize, levels: usize) -> f64 {
    let mut contrasts = Vec::with_capacity(levels);
    while contrasts.len() < levels && w >= 2 && h >= 2 {
        contrasts.push(level_contrast(&v, w, h));
        let (nw, nh) = (w / 2, h / 2);
        let mut next = vec![0.0; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                let s = v[2 * y * w + 2 * x]
                    + v[2 * y * w + 2 * x + 1]
                    + v[(2 * y + 1) * w + 2 * x]
                    + v[(2 * y + 1) * w + 2 * x + 1];
                next[y * nw + x] = s / 4.0;
            }
        }
        v = next;
        w = nw;
        h = nh;
    }
    contrasts.iter().sum::<f64>() / contrasts.len() as f64
}

fn level_contrast(v: &[f64], w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = v[y * w + x];
            let (mut s, mut n) = (0.0, 0usize);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if nx == x && ny == y {
                        continue;
                    }
                    s += (c - v[ny * w + nx]).abs();
                    n += 1;
                }
            }
            total += s / n as f64;
        }
    }
    total / (w * h) as f64
}

/// Squared Pearson correlation. Degenerate (zero-variance) pairs score 1 when
/// every pair matches and 0 otherwise.
pub fn r_squared(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return if pairs.iter().all(|&(x, y)| x == y) { 1.0 } else { 0.0 };
    }
    ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
}

fn mse(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(a, b)| (a - b) * (a - b)).sum::<f64>() / pairs.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample: usize,
    pub timestamp: String,
    pub log10_mse: f64,
    pub log10_rer: f64,
    pub rammg_truth: f64,
    pub rammg_pred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpPair {
    pub sample: usize,
    pub yaw: f64,
    pub truth: f64,
    pub pred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_samples: usize,
    pub n_dgp_pairs: usize,
    pub mean_log10_mse: f64,
    pub mean_log10_rer: f64,
    pub dgp_mse: f64,
    pub dgp_r2: f64,
    pub rammg_mse: f64,
    pub rammg_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregates: Aggregates,
    pub samples: Vec<SampleScore>,
    pub dgp: Vec<DgpPair>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `sample,yaw,dgp_truth,dgp_pred`.
    pub fn dgp_csv(&self) -> String {
        let mut s = String::from("sample,yaw,dgp_truth,dgp_pred\n");
        for p in &self.dgp {
            s.push_str(&format!("{},{},{},{}\n", p.sample, p.yaw, p.truth, p.pred));
        }
        s
    }

    /// `sample,rammg_truth,rammg_pred`.
    pub fn rammg_csv(&self) -> String {
        let mut s = String::from("sample,rammg_truth,rammg_pred\n");
        for p in &self.samples {
            s.push_str(&format!("{},{},{}\n", p.sample, p.rammg_truth, p.rammg_pred));
        }
        s
    }
}

/// Per-sample metrics of one prediction against its truth.
fn score_sample(
    index: usize,
    sample: &SampleTriple,
    pred: &LuminanceMap,
    yaws: &[f64],
    geom: &PanoramaGeometry,
) -> Result<(SampleScore, Vec<DgpPair>)> {
    let (log10_mse, log10_rer) = pixel_errors(pred, &sample.interior)?;
    let mut pairs = Vec::with_capacity(yaws.len());
    for &yaw in yaws {
        pairs.push(DgpPair {
            sample: index,
            yaw,
            truth: dgp_with(&sample.interior, yaw, geom, DEFAULT_GLARE_FACTOR)?,
            pred: dgp_with(pred, yaw, geom, DEFAULT_GLARE_FACTOR)?,
        });
    }
    let score = SampleScore {
        sample: index,
        timestamp: sample.state.timestamp.tag(),
        log10_mse,
        log10_rer,
        rammg_truth: rammg(&sample.interior, DEFAULT_RAMMG_LEVELS)?,
        rammg_pred: rammg(pred, DEFAULT_RAMMG_LEVELS)?,
    };
    Ok((score, pairs))
}

/// Scores `predict` on the test samples. Samples are processed in parallel
/// and aggregated in test-index order.
pub fn evaluation_report_with<F>(source: &dyn SampleSource, test: &[usize], yaws: &[f64], predict: F) -> Result<EvalReport>
where
    F: Fn(&SampleTriple) -> Result<LuminanceMap> + Sync + Send,
{
    if test.is_empty() {
        return Err(Error::invalid("evaluation needs at least one test sample"));
    }
    if let Some(&i) = test.iter().find(|&&i| i >= source.len()) {
        return Err(Error::invalid(format!("test index {i} outside dataset of {}", source.len())));
    }
    let (w, h) = source.dims();
    let geom = PanoramaGeometry::new(w, h)?;
    let one = |&i: &usize| -> Result<(SampleScore, Vec<DgpPair>)> {
        let sample = source.sample(i)?;
        let pred = predict(&sample)?;
        score_sample(i, &sample, &pred, yaws, &geom)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        test.par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = test.iter().map(one).collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(results.len());
    let mut dgp = Vec::new();
    for (s, d) in results {
        samples.push(s);
        dgp.extend(d);
    }
    let n = samples.len() as f64;
    let dgp_pairs: Vec<(f64, f64)> = dgp.iter().map(|p| (p.truth, p.pred)).collect();
    let rammg_pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.rammg_truth, s.rammg_pred)).collect();
    let aggregates = Aggregates {
        n_samples: samples.len(),
        n_dgp_pairs: dgp.len(),
        mean_log10_mse: samples.iter().map(|s| s.log10_mse).sum::<f64>() / n,
        mean_log10_rer: samples.iter().map(|s| s.log10_rer).sum::<f64>() / n,
        dgp_mse: mse(&dgp_pairs),
        dgp_r2: r_squared(&dgp_pairs),
        rammg_mse: mse(&rammg_pairs),
        rammg_r2: r_squared(&rammg_pairs),
    };
    Ok(EvalReport {
        aggregates,
        samples,
        dgp,
    })
}

/// Scores a trained model on the test samples.
pub fn evaluation_report(model: &Model, source: &dyn SampleSource, test: &[usize], yaws: &[f64]) -> Result<EvalReport> {
    if source.dims() != model.dims() {
        return Err(Error::data(format!(
            "dataset is {:?}, model expects {:?}",
            source.dims(),
            model.dims()
        )));
    }
    let predictor = model.predictor();
    evaluation_report_with(source, test, yaws, |s| model.predict_with(&predictor, &s.state, &s.sky, &s.sunpatch))
}

/// Fractions of states per (direct, diffuse) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub bins: usize,
    pub dir_max: f64,
    pub dif_max: f64,
    /// Row-major: `fractions[dir_bin · bins + dif_bin]`.
    pub fractions: Vec<f64>,
}

impl JointDistribution {
    pub fn get(&self, dir_bin: usize, dif_bin: usize) -> f64 {
        self.fractions[dir_bin * self.bins + dif_bin]
    }

    /// `dir_lo,dir_hi,dif_lo,dif_hi,fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dir_lo,dir_hi,dif_lo,dif_hi,fraction\n");
        let (sd, sf) = (self.dir_max / self.bins as f64, self.dif_max / self.bins as f64);
        for i in 0..self.bins {
            for j in 0..self.bins {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    i as f64 * sd,
                    (i + 1) as f64 * sd,
                    j as f64 * sf,
                    (j + 1) as f64 * sf,
                    self.get(i, j)
                ));
            }
        }
        s
    }
}

pub const JOINT_DIR_MAX: f64 = 1400.0;
pub const JOINT_DIF_MAX: f64 = 700.0;

/// `bins × bins` histogram over `[0, 1400] × [0, 700]` W/m², normalized to
/// sum to 1. Values beyond the upper edge count in the last bin.
pub fn joint_distribution(states: &[SkyState], bins: usize) -> Result<JointDistribution> {
    if states.is_empty() {
        return Err(Error::invalid("joint distribution needs at least one state"));
    }
    if bins == 0 {
        return Err(Error::invalid("bins must be positive"));
    }
    let bin = |v: f64, max: f64| ((v.max(0.0) / max * bins as f64).floor() as usize).min(bins - 1);
    let mut counts = vec![0usize; bins * bins];
    for s in states {
        counts[bin(s.dni, JOINT_DIR_MAX) * bins + bin(s.dhi, JOINT_DIF_MAX)] += 1;
    }
    let n = states.len() as f64;
    Ok(JointDistribution {
        bins,
        dir_max: JOINT_DIR_MAX,
        dif_max: JOINT_DIF_MAX,
        fractions: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}
