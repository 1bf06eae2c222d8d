//! Luminance transform (log10, min–max, gamma) and per-pixel feature rows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleTriple;
use crate::error::{Error, Result};
use crate::hdrio::{LuminanceMap, MAX_LUMINANCE};
use crate::sampler::DomainBounds;
use crate::spherical::solid_angle_map;

/// Number of per-pixel input features.
pub const N_FEATURES: usize = 9;

/// Column positions in a feature row.
pub mod feature {
    pub const PX: usize = 0;
    pub const PY: usize = 1;
    pub const ALTITUDE: usize = 2;
    pub const AZIMUTH: usize = 3;
    pub const DNI: usize = 4;
    pub const DHI: usize = 5;
    pub const AVG: usize = 6;
    pub const SUNPATCH: usize = 7;
    pub const SKYMAP: usize = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConstants {
    /// cd/m²; anything darker encodes to 0.
    pub floor: f64,
    /// cd/m²; encodes to 1.
    pub max: f64,
    pub gamma: f64,
}

impl Default for EncodingConstants {
    fn default() -> Self {
        Self {
            floor: 1e-2,
            max: MAX_LUMINANCE,
            gamma: 1.5,
        }
    }
}

impl EncodingConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.max > self.floor && self.max.is_finite()) {
            return Err(Error::invalid(format!(
                "encoding needs 0 < floor < max, got floor={} max={}",
                self.floor, self.max
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    fn log_span(&self) -> f64 {
        self.max.log10() - self.floor.log10()
    }
}

/// Maps luminance onto `[0, 1]`: log10, min–max over `[floor, max]`, then `^(1/γ)`.
pub fn encode_luminance(l: f64, c: &EncodingConstants) -> f64 {
    let clamped = if l.is_nan() { c.floor } else { l.clamp(c.floor, c.max) };
    let e = (clamped.log10() - c.floor.log10()) / c.log_span();
    e.clamp(0.0, 1.0).powf(1.0 / c.gamma)
}

/// Exact inverse of [`encode_luminance`] on `[floor, max]`.
pub fn decode_luminance(p: f64, c: &EncodingConstants) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("encoded value {p} outside [0, 1]")));
    }
    Ok(decode_clamped(p, c))
}

/// Decoding for network outputs, which may overshoot 1.
pub fn decode_clamped(p: f64, c: &EncodingConstants) -> f64 {
    let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    10f64.powf(p.powf(c.gamma) * c.log_span() + c.floor.log10())
}

/// Per-pixel mean encoded interior luminance over the training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl AvgMap {
    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Decoded luminance of the average: the baseline prediction.
    pub fn to_luminance(&self, c: &EncodingConstants) -> LuminanceMap {
        let values = self.values.iter().map(|&p| decode_clamped(p, c)).collect();
        LuminanceMap::new(self.width, self.height, values).expect("avg map dims")
    }
}

/// Mean of the encoded interiors of `samples`.
pub fn average_luminance_map<'a, I>(samples: I, c: &EncodingConstants) -> Result<AvgMap>
where
    I: IntoIterator<Item = &'a LuminanceMap>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut dims = (0, 0);
    let mut n = 0usize;
    for map in samples {
        if n == 0 {
            dims = (map.width(), map.height());
            sum = vec![0.0; map.values().len()];
        } else if (map.width(), map.height()) != dims {
            return Err(Error::data(format!(
                "interior map {}x{} does not match {}x{}",
                map.width(),
                map.height(),
                dims.0,
                dims.1
            )));
        }
        for (s, &l) in sum.iter_mut().zip(map.values()) {
            *s += encode_luminance(l, c);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("average map needs at least one training sample"));
    }
    Ok(AvgMap {
        width: dims.0,
        height: dims.1,
        values: sum.into_iter().map(|s| (s / n as f64).clamp(0.0, 1.0)).collect(),
    })
}

/// Feature rows for every pixel of one sample, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRows {
    /// `W·H × 9`.
    pub features: Array2<f64>,
    /// Encoded interior luminance; absent at prediction time.
    pub target: Option<Vec<f64>>,
    /// Pixel solid angles.
    pub omega: Vec<f64>,
}

/// Everything besides the maps needed to build feature rows.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub avg: &'a AvgMap,
    pub encoding: &'a EncodingConstants,
    pub bounds: &'a DomainBounds,
}

/// Assembles rows from sky and sun-patch maps (and, when given, the
/// interior as target).
pub fn assemble_rows(
    state: &crate::skyctx::SkyState,
    sky: &LuminanceMap,
    sunpatch: &LuminanceMap,
    interior: Option<&LuminanceMap>,
    ctx: FeatureContext<'_>,
) -> Result<PixelRows> {
    let (w, h) = (ctx.avg.width, ctx.avg.height);
    let check = |m: &LuminanceMap, what: &str| -> Result<()> {
        if (m.width(), m.height()) != (w, h) {
            return Err(Error::data(format!(
                "{what} map is {}x{}, expected {w}x{h}",
                m.width(),
                m.height()
            )));
        }
        Ok(())
    };
    check(sky, "sky")?;
    check(sunpatch, "sun-patch")?;
    if let Some(m) = interior {
        check(m, "interior")?;
    }
    let light = ctx.bounds.normalize(state);
    let mut features = Array2::<f64>::zeros((w * h, N_FEATURES));
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let (x, y) = (i % w, i / w);
        row[feature::PX] = (x as f64 + 0.5) / w as f64;
        row[feature::PY] = (y as f64 + 0.5) / h as f64;
        row[feature::ALTITUDE] = light[0];
        row[feature::AZIMUTH] = light[1];
        row[feature::DNI] = light[2];
        row[feature::DHI] = light[3];
        row[feature::AVG] = ctx.avg.get(i);
        row[feature::SUNPATCH] = encode_luminance(sunpatch.values()[i], ctx.encoding);
        row[feature::SKYMAP] = encode_luminance(sky.values()[i], ctx.encoding);
    }
    let target = interior.map(|m| {
        m.values()
            .iter()
            .map(|&l| encode_luminance(l, ctx.encoding))
            .collect()
    });
    let omega = solid_angle_map(w, h)?.per_pixel();
    Ok(PixelRows {
        features,
        target,
        omega,
    })
}

/// [`assemble_rows`] for a full sample, with the interior as target.
pub fn assemble_features(sample: &SampleTriple, ctx: FeatureContext<'_>) -> Result<PixelRows> {
    assemble_rows(
        &sample.state,
        &sample.sky,
        &sample.sunpatch,
        Some(&sample.interior),
        ctx,
    )
}
