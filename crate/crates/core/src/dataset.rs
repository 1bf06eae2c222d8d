//! Sample triples and the sources that provide them.
//!
//! A dataset directory holds `index.csv` plus three HDR panoramas per state
//! (`interior`, `sky` and `sun`). The index header is
//! `timestamp,al,az,dni,dhi,interior,sky,sun`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hdrio::{luminance_map, read_hdr, write_hdr, LuminanceMap, RadianceImage};
use crate::skyctx::{SkyState, Timestamp};

pub const INDEX_FILE: &str = "index.csv";
pub const INDEX_HEADER: &str = "timestamp,al,az,dni,dhi,interior,sky,sun";

/// One hour's interior, sky and sun-patch panoramas.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriple {
    pub state: SkyState,
    pub interior: LuminanceMap,
    pub sky: LuminanceMap,
    pub sunpatch: LuminanceMap,
}

/// Indexed access to sample triples.
pub trait SampleSource: Sync {
    fn states(&self) -> &[SkyState];
    /// `(width, height)` shared by every map.
    fn dims(&self) -> (usize, usize);
    fn sample(&self, index: usize) -> Result<SampleTriple>;

    fn len(&self) -> usize {
        self.states().len()
    }

    fn is_empty(&self) -> bool {
        self.states().is_empty()
    }
}

/// Samples held in memory.
#[derive(Debug, Clone)]
pub struct MemoryDataset {
    states: Vec<SkyState>,
    samples: Vec<SampleTriple>,
    dims: (usize, usize),
}

impl MemoryDataset {
    pub fn new(samples: Vec<SampleTriple>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset needs at least one sample"))?;
        let dims = (first.interior.width(), first.interior.height());
        for s in &samples {
            for m in [&s.interior, &s.sky, &s.sunpatch] {
                if (m.width(), m.height()) != dims {
                    return Err(Error::data(format!(
                        "sample {} has a {}x{} map, expected {}x{}",
                        s.state.timestamp,
                        m.width(),
                        m.height(),
                        dims.0,
                        dims.1
                    )));
                }
            }
        }
        Ok(Self {
            states: samples.iter().map(|s| s.state).collect(),
            samples,
            dims,
        })
    }
}

impl SampleSource for MemoryDataset {
    fn states(&self) -> &[SkyState] {
        &self.states
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn sample(&self, index: usize) -> Result<SampleTriple> {
        self.samples
            .get(index)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))
    }
}

/// File names for one state.
pub fn sample_file_names(ts: &Timestamp) -> [String; 3] {
    let tag = ts.tag();
    [
        format!("{tag}_interior.hdr"),
        format!("{tag}_sky.hdr"),
        format!("{tag}_sun.hdr"),
    ]
}

/// A dataset directory read lazily from disk.
#[derive(Debug, Clone)]
pub struct DiskDataset {
    dir: PathBuf,
    states: Vec<SkyState>,
    files: Vec<[String; 3]>,
    dims: (usize, usize),
}

fn read_map(path: &Path) -> Result<LuminanceMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = read_hdr(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::CorruptData(m) => Error::CorruptData(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(luminance_map(&img))
}

impl DiskDataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let index_path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let (states, files) = parse_index(&text)?;
        if states.is_empty() {
            return Err(Error::data(format!("{} lists no samples", index_path.display())));
        }
        let probe = read_map(&dir.join(&files[0][0]))?;
        Ok(Self {
            dims: (probe.width(), probe.height()),
            dir,
            states,
            files,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Position of the state with the given timestamp.
    pub fn find(&self, ts: &Timestamp) -> Option<usize> {
        self.states.iter().position(|s| s.timestamp == *ts)
    }
}

impl SampleSource for DiskDataset {
    fn states(&self) -> &[SkyState] {
        &self.states
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn sample(&self, index: usize) -> Result<SampleTriple> {
        let files = self
            .files
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))?;
        let interior = read_map(&self.dir.join(&files[0]))?;
        let sky = read_map(&self.dir.join(&files[1]))?;
        let sunpatch = read_map(&self.dir.join(&files[2]))?;
        for m in [&interior, &sky, &sunpatch] {
            if (m.width(), m.height()) != self.dims {
                return Err(Error::data(format!(
                    "sample {} is {}x{}, dataset is {}x{}",
                    files[0],
                    m.width(),
                    m.height(),
                    self.dims.0,
                    self.dims.1
                )));
            }
        }
        Ok(SampleTriple {
            state: self.states[index],
            interior,
            sky,
            sunpatch,
        })
    }
}

/// Parses `index.csv` into states and file triples.
pub fn parse_index(text: &str) -> Result<(Vec<SkyState>, Vec<[String; 3]>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == INDEX_HEADER => {}
        _ => return Err(Error::format(format!("index header must be {INDEX_HEADER:?}"))),
    }
    let mut states = Vec::new();
    let mut files = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(Error::format(format!("index line {}: expected 8 fields", i + 1)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format(format!("index line {}: bad number {s:?}", i + 1)))
        };
        states.push(SkyState {
            timestamp: Timestamp::parse_tag(f[0])?,
            altitude: num(f[1])?,
            azimuth: num(f[2])?,
            dni: num(f[3])?,
            dhi: num(f[4])?,
        });
        files.push([f[5].to_string(), f[6].to_string(), f[7].to_string()]);
    }
    Ok((states, files))
}

pub fn index_line(state: &SkyState) -> String {
    let [a, b, c] = sample_file_names(&state.timestamp);
    format!(
        "{},{},{},{},{},{a},{b},{c}",
        state.timestamp.tag(),
        state.altitude,
        state.azimuth,
        state.dni,
        state.dhi
    )
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes a luminance map as a grey Radiance HDR file.
pub fn write_luminance_hdr(path: &Path, map: &LuminanceMap) -> Result<()> {
    let bytes = write_hdr(&RadianceImage::from_luminance(map))?;
    write_atomic(path, &bytes)
}

/// Reads any Radiance file as a luminance map.
pub fn read_luminance_hdr(path: &Path) -> Result<LuminanceMap> {
    read_map(path)
}

/// Writes one sample's three panoramas into `dir`.
pub fn write_sample(dir: &Path, sample: &SampleTriple) -> Result<()> {
    let names = sample_file_names(&sample.state.timestamp);
    write_luminance_hdr(&dir.join(&names[0]), &sample.interior)?;
    write_luminance_hdr(&dir.join(&names[1]), &sample.sky)?;
    write_luminance_hdr(&dir.join(&names[2]), &sample.sunpatch)
}

/// Writes `index.csv` for `states`.
pub fn write_index(dir: &Path, states: &[SkyState]) -> Result<()> {
    let mut text = String::from(INDEX_HEADER);
    text.push('\n');
    for s in states {
        text.push_str(&index_line(s));
        text.push('\n');
    }
    write_atomic(&dir.join(INDEX_FILE), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> SkyState {
        SkyState {
            timestamp: Timestamp::new(1999, 7, 4, 13, 30).unwrap(),
            altitude: 55.25,
            azimuth: -12.5,
            dni: 640.0,
            dhi: 88.0,
        }
    }

    #[test]
    fn index_round_trip() {
        let text = format!("{INDEX_HEADER}\n{}\n", index_line(&state()));
        let (states, files) = parse_index(&text).unwrap();
        assert_eq!(states, vec![state()]);
        assert_eq!(files[0][2], "19990704_1330_sun.hdr");
        assert!(parse_index("timestamp,al\n").is_err());
        assert!(parse_index(&format!("{INDEX_HEADER}\n1,2,3\n")).is_err());
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = LuminanceMap::new(9, 3, (0..27).map(|i| i as f64 * 10.0).collect()).unwrap();
        let sample = SampleTriple {
            state: state(),
            interior: m.clone(),
            sky: m.scaled(2.0),
            sunpatch: m.scaled(0.5),
        };
        write_sample(dir.path(), &sample).unwrap();
        write_index(dir.path(), &[state()]).unwrap();
        let ds = DiskDataset::open(dir.path()).unwrap();
        assert_eq!(ds.dims(), (9, 3));
        assert_eq!(ds.len(), 1);
        let back = ds.sample(0).unwrap();
        for (a, b) in back.sky.values().iter().zip(sample.sky.values()) {
            assert!((a - b).abs() <= 0.005 * b.max(1e-30), "{a} vs {b}");
        }
        assert!(ds.sample(1).is_err());
        assert_eq!(ds.find(&state().timestamp), Some(0));
    }

    #[test]
    fn memory_dataset_checks_dims() {
        let a = LuminanceMap::uniform(4, 2, 1.0).unwrap();
        let b = LuminanceMap::uniform(2, 4, 1.0).unwrap();
        let ok = SampleTriple {
            state: state(),
            interior: a.clone(),
            sky: a.clone(),
            sunpatch: a.clone(),
        };
        let bad = SampleTriple {
            sky: b,
            ..ok.clone()
        };
        assert!(MemoryDataset::new(vec![ok.clone()]).is_ok());
        assert!(matches!(MemoryDataset::new(vec![ok, bad]), Err(Error::Data(_))));
        assert!(MemoryDataset::new(vec![]).is_err());
    }
}
