//! Browser bindings: render an oracle panorama for a chosen hour and sky,
//! then inspect it as false color, as a fisheye view with its glare
//! probability, or through its multiscale contrast.

use lumen_core::evalsuite::{dgp, rammg};
use lumen_core::hdrio::{falsecolor, LuminanceMap};
use lumen_core::oracle::{render_triple, SceneSpec};
use lumen_core::skyctx::{sun_position as solar, Site, SkyState, Timestamp};
use lumen_core::spherical::{panorama_to_fisheye, vertical_illuminance};
use wasm_bindgen::prelude::*;

const DEMO_YEAR: i32 = 2001;

fn js(e: lumen_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(map: &LuminanceMap, lo: f64, hi: f64) -> Result<Vec<u8>, JsError> {
    let rgb = falsecolor(map, lo, hi).map_err(js)?;
    let mut out = Vec::with_capacity(rgb.width * rgb.height * 4);
    for px in rgb.data.chunks_exact(3) {
        out.extend_from_slice(&[px[0], px[1], px[2], 255]);
    }
    Ok(out)
}

fn timestamp(month: u32, day: u32, hour: u32) -> Result<Timestamp, JsError> {
    Timestamp::new(DEMO_YEAR, month, day, hour, 30).map_err(js)
}

/// `[altitude, azimuth]` in degrees for Seattle at `hour:30` local standard time.
#[wasm_bindgen]
pub fn sun_position(month: u32, day: u32, hour: u32) -> Result<Vec<f64>, JsError> {
    let (alt, az) = solar(&Site::seattle(), &timestamp(month, day, hour)?);
    Ok(vec![alt, az])
}

/// One rendered interior panorama of the default room.
#[wasm_bindgen]
pub struct Viewer {
    pan: LuminanceMap,
    altitude: f64,
}

#[wasm_bindgen]
impl Viewer {
    /// Renders the interior for the given hour and irradiances (W/m²).
    pub fn render(month: u32, day: u32, hour: u32, dni: f64, dhi: f64, width: usize, height: usize) -> Result<Viewer, JsError> {
        let ts = timestamp(month, day, hour)?;
        let (altitude, azimuth) = solar(&Site::seattle(), &ts);
        let lit = altitude > 0.0;
        let state = SkyState {
            timestamp: ts,
            altitude,
            azimuth,
            dni: if lit { dni.max(0.0) } else { 0.0 },
            dhi: if lit { dhi.max(0.0) } else { 0.0 },
        };
        let triple = render_triple(&SceneSpec::default(), &state, width, height).map_err(js)?;
        Ok(Viewer { pan: triple.interior, altitude })
    }

    pub fn width(&self) -> usize {
        self.pan.width()
    }

    pub fn height(&self) -> usize {
        self.pan.height()
    }

    pub fn sun_altitude(&self) -> f64 {
        self.altitude
    }

    /// Log false color between `lo` and `hi` cd/m² as RGBA bytes.
    pub fn panorama_rgba(&self, lo: f64, hi: f64) -> Result<Vec<u8>, JsError> {
        rgba(&self.pan, lo, hi)
    }

    /// Fisheye view at `yaw` degrees as RGBA bytes, `size`² pixels.
    pub fn fisheye_rgba(&self, yaw: f64, size: usize, lo: f64, hi: f64) -> Result<Vec<u8>, JsError> {
        let fish = panorama_to_fisheye(&self.pan, yaw, size).map_err(js)?;
        rgba(&fish.to_luminance_map(), lo, hi)
    }

    pub fn dgp(&self, yaw: f64) -> f64 {
        dgp(&self.pan, yaw)
    }

    /// Vertical eye illuminance (lux) at `yaw` degrees.
    pub fn illuminance(&self, yaw: f64) -> f64 {
        vertical_illuminance(&self.pan, yaw)
    }

    pub fn rammg(&self, levels: usize) -> Result<f64, JsError> {
        rammg(&self.pan, levels).map_err(js)
    }
}
