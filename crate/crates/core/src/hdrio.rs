//! Radiance RGBE images, luminance maps and false-color rasters.
//!
//! Only the `-Y H +X W` orientation is read or written. Pixel payloads may be
//! flat (with old-style run markers) or new-style run-length encoded
//! scanlines.

use crate::error::{Error, Result};

/// Luminous efficacy used by Radiance to convert radiance to luminance (lm/W).
pub const LUMINOUS_EFFICACY: f64 = 179.0;
/// Luminance weights of the Radiance RGB primaries.
pub const LUM_COEFFS: [f64; 3] = [0.265, 0.670, 0.065];
/// Ingest ceiling for luminance values (cd/m²), the luminance of the solar disc.
pub const MAX_LUMINANCE: f64 = 1.6e9;

const MIN_RLE_WIDTH: usize = 8;
const MAX_RLE_WIDTH: usize = 0x7fff;

/// An RGB radiance image in row-major order (W·m⁻²·sr⁻¹ per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    exposure: f64,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if pixels
            .iter()
            .flatten()
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::invalid("channel values must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            pixels,
            exposure: 1.0,
        })
    }

    /// Grey image whose luminance equals `map` exactly (before quantization).
    pub fn from_luminance(map: &LuminanceMap) -> Self {
        let pixels = map
            .values()
            .iter()
            .map(|&l| {
                let v = l / LUMINOUS_EFFICACY;
                [v, v, v]
            })
            .collect();
        Self {
            width: map.width(),
            height: map.height(),
            pixels,
            exposure: 1.0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    /// Accumulated `EXPOSURE=` multiplier read from the header (1 for new images).
    pub fn exposure(&self) -> f64 {
        self.exposure
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

/// A row-major grid of luminance values in cd/m².
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LuminanceMap {
    /// Builds a map, clamping every value into `[0, MAX_LUMINANCE]`.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("luminance values must not be NaN"));
        }
        let values = values
            .into_iter()
            .map(|v| v.clamp(0.0, MAX_LUMINANCE))
            .collect();
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_dims(&self, other: &LuminanceMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Scales every value by `k` (re-clamped).
    pub fn scaled(&self, k: f64) -> LuminanceMap {
        LuminanceMap {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|v| (v * k).clamp(0.0, MAX_LUMINANCE))
                .collect(),
        }
    }
}

/// Per-pixel `L = 179·(0.265 R + 0.670 G + 0.065 B)`, clamped to the ingest range.
pub fn luminance_map(image: &RadianceImage) -> LuminanceMap {
    let values = image
        .pixels
        .iter()
        .map(|p| {
            let l = LUMINOUS_EFFICACY
                * (LUM_COEFFS[0] * p[0] + LUM_COEFFS[1] * p[1] + LUM_COEFFS[2] * p[2]);
            l.clamp(0.0, MAX_LUMINANCE)
        })
        .collect();
    LuminanceMap {
        width: image.width,
        height: image.height,
        values,
    }
}

// ---------------------------------------------------------------------------
// RGBE codec

/// Decodes one RGBE quadruple.
pub fn rgbe_to_rgb(rgbe: [u8; 4]) -> [f64; 3] {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let scale = 2f64.powi(rgbe[3] as i32 - 128) / 256.0;
    [
        (rgbe[0] as f64 + 0.5) * scale,
        (rgbe[1] as f64 + 0.5) * scale,
        (rgbe[2] as f64 + 0.5) * scale,
    ]
}

/// Encodes one RGB triple with a shared exponent.
pub fn rgb_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if !(v > 1e-32) {
        return [0; 4];
    }
    // v = m·2^e with m in [0.5, 1)
    let mut e = v.log2().floor() as i32 + 1;
    let mut m = v / 2f64.powi(e);
    if m >= 1.0 {
        e += 1;
        m /= 2.0;
    } else if m < 0.5 {
        e -= 1;
        m *= 2.0;
    }
    debug_assert!((0.5..1.0).contains(&m));
    if e + 128 > 255 {
        return [255, 255, 255, 255];
    }
    if e + 128 < 1 {
        return [0; 4];
    }
    let scale = 256.0 / 2f64.powi(e);
    let q = |c: f64| ((c * scale).floor() as i64).clamp(0, 255) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

/// Serializes an image in Radiance format.
pub fn write_hdr(image: &RadianceImage) -> Result<Vec<u8>> {
    if image.width == 0 || image.height == 0 {
        return Err(Error::invalid("cannot write an image with a zero dimension"));
    }
    let w = image.width;
    let mut out = Vec::with_capacity(64 + image.pixels.len() * 4);
    out.extend_from_slice(b"#?RADIANCE\n");
    out.extend_from_slice(b"FORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {} +X {}\n", image.height, w).as_bytes());

    let rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w);
    let mut planes: [Vec<u8>; 4] = Default::default();
    for row in image.pixels.chunks(w) {
        // Stored radiance is the physical value times the exposure.
        let quads = row.iter().map(|p| {
            rgb_to_rgbe([
                p[0] * image.exposure,
                p[1] * image.exposure,
                p[2] * image.exposure,
            ])
        });
        if !rle {
            for q in quads {
                out.extend_from_slice(&q);
            }
            continue;
        }
        for plane in planes.iter_mut() {
            plane.clear();
        }
        for q in quads {
            for (c, plane) in planes.iter_mut().enumerate() {
                plane.push(q[c]);
            }
        }
        out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
        for plane in &planes {
            rle_encode_plane(plane, &mut out);
        }
    }
    if image.exposure != 1.0 {
        // EXPOSURE goes in the header; inserted after FORMAT.
        let header_end = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n".len();
        let line = format!("EXPOSURE={:e}\n", image.exposure);
        out.splice(header_end..header_end, line.into_bytes());
    }
    Ok(out)
}

fn rle_encode_plane(data: &[u8], out: &mut Vec<u8>) {
    const MIN_RUN: usize = 4;
    let n = data.len();
    let mut cur = 0;
    while cur < n {
        let mut beg_run = cur;
        let mut run_count = 0;
        let mut old_run_count = 0;
        while run_count < MIN_RUN && beg_run < n {
            beg_run += run_count;
            old_run_count = run_count;
            run_count = 1;
            while beg_run + run_count < n
                && run_count < 127
                && data[beg_run] == data[beg_run + run_count]
            {
                run_count += 1;
            }
        }
        // a short run right before the long one
        if old_run_count > 1 && old_run_count == beg_run - cur {
            out.push((128 + old_run_count) as u8);
            out.push(data[cur]);
            cur = beg_run;
        }
        while cur < beg_run {
            let count = (beg_run - cur).min(128);
            out.push(count as u8);
            out.extend_from_slice(&data[cur..cur + count]);
            cur += count;
        }
        if run_count >= MIN_RUN {
            out.push((128 + run_count) as u8);
            out.push(data[beg_run]);
            cur += run_count;
        }
    }
}

/// Parses a Radiance RGBE image.
pub fn read_hdr(bytes: &[u8]) -> Result<RadianceImage> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<String> {
        let start = *pos;
        let rel = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("unterminated header line"))?;
        *pos = start + rel + 1;
        Ok(String::from_utf8_lossy(&bytes[start..start + rel]).into_owned())
    };

    let magic = next_line(&mut pos)?;
    let magic = magic.trim_end();
    if magic != "#?RADIANCE" && magic != "#?RGBE" {
        return Err(Error::format(format!("bad magic line {magic:?}")));
    }

    let mut exposure = 1.0;
    loop {
        let line = next_line(&mut pos)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::UnsupportedFormat(fmt.trim().to_string()));
            }
        } else if let Some(exp) = line.strip_prefix("EXPOSURE=") {
            let e: f64 = exp
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("bad EXPOSURE value {exp:?}")))?;
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::format(format!("bad EXPOSURE value {exp:?}")));
            }
            exposure *= e;
        }
    }

    let res = next_line(&mut pos)?;
    let toks: Vec<&str> = res.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(Error::format(format!("bad resolution line {res:?}")));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::format(format!("bad resolution value {s:?}")))
    };
    let height = parse_dim(toks[1])?;
    let width = parse_dim(toks[3])?;
    if toks[0] != "-Y" || toks[2] != "+X" {
        let known = ["-Y", "+Y", "-X", "+X"];
        if known.contains(&toks[0]) && known.contains(&toks[2]) {
            return Err(Error::UnsupportedFormat(format!(
                "orientation {} {} (only -Y +X supported)",
                toks[0], toks[2]
            )));
        }
        return Err(Error::format(format!("bad resolution line {res:?}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero image dimension"));
    }

    let mut data = &bytes[pos..];
    let mut pixels = Vec::with_capacity(width * height);
    let mut scan = vec![[0u8; 4]; width];
    for y in 0..height {
        read_scanline(&mut data, &mut scan, y)?;
        pixels.extend(scan.iter().map(|&q| {
            let c = rgbe_to_rgb(q);
            [c[0] / exposure, c[1] / exposure, c[2] / exposure]
        }));
    }
    Ok(RadianceImage {
        width,
        height,
        pixels,
        exposure,
    })
}

fn take<'a>(data: &mut &'a [u8], n: usize, y: usize) -> Result<&'a [u8]> {
    if data.len() < n {
        return Err(Error::CorruptData(format!("truncated pixel data in scanline {y}")));
    }
    let (head, tail) = data.split_at(n);
    *data = tail;
    Ok(head)
}

fn read_scanline(data: &mut &[u8], scan: &mut [[u8; 4]], y: usize) -> Result<()> {
    let w = scan.len();
    let is_new_rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w)
        && data.len() >= 4
        && data[0] == 2
        && data[1] == 2
        && data[2] & 0x80 == 0;
    if !is_new_rle {
        return read_flat_scanline(data, scan, y);
    }
    let head = take(data, 4, y)?;
    let len = ((head[2] as usize) << 8) | head[3] as usize;
    if len != w {
        return Err(Error::CorruptData(format!(
            "scanline {y} length {len} does not match width {w}"
        )));
    }
    for c in 0..4 {
        let mut x = 0;
        while x < w {
            let code = take(data, 1, y)?[0] as usize;
            if code > 128 {
                let count = code - 128;
                let val = take(data, 1, y)?[0];
                if x + count > w {
                    return Err(Error::CorruptData(format!("run overflows scanline {y}")));
                }
                for px in &mut scan[x..x + count] {
                    px[c] = val;
                }
                x += count;
            } else {
                if code == 0 || x + code > w {
                    return Err(Error::CorruptData(format!("bad literal count in scanline {y}")));
                }
                let vals = take(data, code, y)?;
                for (px, &v) in scan[x..x + code].iter_mut().zip(vals) {
                    px[c] = v;
                }
                x += code;
            }
        }
    }
    Ok(())
}

fn read_flat_scanline(data: &mut &[u8], scan: &mut [[u8; 4]], y: usize) -> Result<()> {
    let w = scan.len();
    let mut x = 0;
    let mut shift = 0;
    while x < w {
        let q = take(data, 4, y)?;
        let q = [q[0], q[1], q[2], q[3]];
        if q[0] == 1 && q[1] == 1 && q[2] == 1 {
            // old-style run: repeat previous pixel
            if x == 0 {
                return Err(Error::CorruptData(format!("run marker at start of scanline {y}")));
            }
            let count = (q[3] as usize) << shift;
            if x + count > w {
                return Err(Error::CorruptData(format!("run overflows scanline {y}")));
            }
            let prev = scan[x - 1];
            for px in &mut scan[x..x + count] {
                *px = prev;
            }
            x += count;
            shift += 8;
        } else {
            scan[x] = q;
            x += 1;
            shift = 0;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// False color

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8Image {
    /// Binary PPM (`P6`) encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// RGBA bytes with opaque alpha, for canvas upload.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.data
            .chunks(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }
}

const RAMP_ANCHORS: [[f64; 3]; 5] = [
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
];

/// Entry `i` of the 256-step blue→cyan→green→yellow→red ramp.
pub fn ramp_color(i: u8) -> [u8; 3] {
    let s = i as f64 / 255.0 * 4.0;
    let seg = (s.floor() as usize).min(3);
    let t = s - seg as f64;
    let a = RAMP_ANCHORS[seg];
    let b = RAMP_ANCHORS[seg + 1];
    let mix = |k: usize| (a[k] + (b[k] - a[k]) * t).round() as u8;
    [mix(0), mix(1), mix(2)]
}

/// Ramp index for luminance `l` on a log scale spanning `[lo, hi]`.
pub fn falsecolor_index(l: f64, lo: f64, hi: f64) -> u8 {
    let s = if l > 0.0 {
        ((l.log10() - lo.log10()) / (hi.log10() - lo.log10())).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (s * 255.0).round() as u8
}

/// Renders `map` in false color with a logarithmic scale between `lo` and `hi`.
pub fn falsecolor(map: &LuminanceMap, lo: f64, hi: f64) -> Result<Rgb8Image> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "false-color range needs 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let data = map
        .values()
        .iter()
        .flat_map(|&l| ramp_color(falsecolor_index(l, lo, hi)))
        .collect();
    Ok(Rgb8Image {
        width: map.width(),
        height: map.height(),
        data,
    })
}
