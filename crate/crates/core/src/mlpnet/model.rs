//! Trained models: panorama prediction and the JSON model file.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::kernel::{dense_relu, PackedDense};
use super::{Architecture, Layer, Network, BRANCH_A_FEATURES, BRANCH_B_FEATURE};
use crate::encoding::{assemble_rows, decode_clamped, AvgMap, EncodingConstants, FeatureContext};
use crate::error::{Error, Result};
use crate::hdrio::LuminanceMap;
use crate::sampler::DomainBounds;
use crate::skyctx::SkyState;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
}

/// A network together with everything needed to build its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub encoding: EncodingConstants,
    pub bounds: DomainBounds,
    pub avg: AvgMap,
    pub metadata: ModelMetadata,
}

/// Rows per inference chunk; sized so a chunk's activations stay in cache.
const PREDICT_CHUNK: usize = 1200;

/// Single-precision copy of a network, packed for [`dense_relu`].
#[derive(Debug, Clone)]
pub struct Predictor {
    chains: [Vec<PackedDense>; 3],
    a_out: usize,
    head_in: usize,
}

impl Predictor {
    pub fn new(net: &Network) -> Self {
        let [la, lb, lh] = net.split();
        let pack = |ls: &[Layer]| ls.iter().map(|l| PackedDense::pack(&l.weights, &l.bias)).collect();
        Self {
            chains: [pack(la), pack(lb), pack(lh)],
            a_out: net.architecture.branch_a.last().copied().unwrap_or(BRANCH_A_FEATURES.len()),
            head_in: net.architecture.head_input(),
        }
    }

    /// Runs `layers` on `input` (`n × k`, row-major), writing the final layer
    /// into `dst` at `ldc`/`col_off`.
    fn run_chain(layers: &[PackedDense], input: &[f32], k: usize, n: usize, dst: &mut [f32], ldc: usize, col_off: usize) {
        if layers.is_empty() {
            for i in 0..n {
                dst[i * ldc + col_off..i * ldc + col_off + k].copy_from_slice(&input[i * k..(i + 1) * k]);
            }
            return;
        }
        let mut cur = input.to_vec();
        let mut width = k;
        for (j, layer) in layers.iter().enumerate() {
            let m = layer.outputs();
            if j + 1 == layers.len() {
                dense_relu(&cur, width, n, layer, dst, ldc, col_off);
            } else {
                let mut next = vec![0f32; n * m];
                dense_relu(&cur, width, n, layer, &mut next, m, 0);
                cur = next;
                width = m;
            }
        }
    }

    fn chunk(&self, rows: &Array2<f64>, start: usize, end: usize) -> Vec<f32> {
        let n = end - start;
        let ka = BRANCH_A_FEATURES.len();
        let mut xa = vec![0f32; n * ka];
        let mut xb = vec![0f32; n];
        for i in 0..n {
            let r = rows.row(start + i);
            for (j, &f) in BRANCH_A_FEATURES.iter().enumerate() {
                xa[i * ka + j] = r[f] as f32;
            }
            xb[i] = r[BRANCH_B_FEATURE] as f32;
        }
        let mut head = vec![0f32; n * self.head_in];
        Self::run_chain(&self.chains[0], &xa, ka, n, &mut head, self.head_in, 0);
        Self::run_chain(&self.chains[1], &xb, 1, n, &mut head, self.head_in, self.a_out);
        let mut out = vec![0f32; n];
        Self::run_chain(&self.chains[2], &head, self.head_in, n, &mut out, 1, 0);
        out
    }

    /// Encoded predictions for `n × 9` rows.
    pub fn predict_rows(&self, rows: &Array2<f64>) -> Array1<f64> {
        let n = rows.nrows();
        let ranges: Vec<(usize, usize)> = (0..n.div_ceil(PREDICT_CHUNK))
            .map(|c| (c * PREDICT_CHUNK, ((c + 1) * PREDICT_CHUNK).min(n)))
            .collect();
        let run = |&(s, e): &(usize, usize)| self.chunk(rows, s, e);
        #[cfg(feature = "parallel")]
        let parts: Vec<Vec<f32>> = {
            use rayon::prelude::*;
            ranges.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Vec<f32>> = ranges.iter().map(run).collect();
        parts.into_iter().flatten().map(f64::from).collect()
    }
}

impl Model {
    /// `(width, height)` of the panoramas this model accepts.
    pub fn dims(&self) -> (usize, usize) {
        (self.avg.width, self.avg.height)
    }

    pub fn feature_context(&self) -> FeatureContext<'_> {
        FeatureContext {
            avg: &self.avg,
            encoding: &self.encoding,
            bounds: &self.bounds,
        }
    }

    pub fn predictor(&self) -> Predictor {
        Predictor::new(&self.network)
    }

    /// Predicted interior panorama for one state.
    pub fn predict_panorama(&self, state: &SkyState, sky: &LuminanceMap, sunpatch: &LuminanceMap) -> Result<LuminanceMap> {
        self.predict_with(&self.predictor(), state, sky, sunpatch)
    }

    /// [`Model::predict_panorama`] reusing a packed predictor.
    pub fn predict_with(
        &self,
        predictor: &Predictor,
        state: &SkyState,
        sky: &LuminanceMap,
        sunpatch: &LuminanceMap,
    ) -> Result<LuminanceMap> {
        let rows = assemble_rows(state, sky, sunpatch, None, self.feature_context())?;
        let encoded = predictor.predict_rows(&rows.features);
        let (w, h) = self.dims();
        let values = encoded.iter().map(|&p| decode_clamped(p, &self.encoding)).collect();
        LuminanceMap::new(w, h, values)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvgDoc {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    architecture: Architecture,
    encoding: EncodingConstants,
    bounds: DomainBounds,
    avg_map: AvgDoc,
    layers: Vec<LayerDoc>,
    metadata: ModelMetadata,
}

/// Serializes a model as JSON; numbers round-trip exactly.
pub fn save_model(model: &Model) -> Result<Vec<u8>> {
    let doc = ModelDoc {
        format_version: MODEL_FORMAT_VERSION,
        architecture: model.network.architecture.clone(),
        encoding: model.encoding,
        bounds: model.bounds,
        avg_map: AvgDoc {
            width: model.avg.width,
            height: model.avg.height,
            values: model.avg.values.clone(),
        },
        layers: model
            .network
            .layers
            .iter()
            .map(|l| LayerDoc {
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
        metadata: model.metadata.clone(),
    };
    Ok(serde_json::to_vec(&doc)?)
}

pub fn load_model(bytes: &[u8]) -> Result<Model> {
    let doc: ModelDoc = serde_json::from_slice(bytes).map_err(|e| Error::format(format!("model file: {e}")))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    doc.encoding.validate().map_err(|e| Error::format(e.to_string()))?;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (k, l) in doc.layers.into_iter().enumerate() {
        if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
            return Err(Error::format(format!(
                "layer {k}: {} weights and {} biases do not fit {}x{}",
                l.weights.len(),
                l.bias.len(),
                l.rows,
                l.cols
            )));
        }
        layers.push(Layer {
            weights: Array2::from_shape_vec((l.rows, l.cols), l.weights).expect("length checked"),
            bias: Array1::from(l.bias),
        });
    }
    let network = Network {
        architecture: doc.architecture,
        layers,
    };
    network.check_shapes().map_err(|e| Error::format(e.to_string()))?;
    if !network.is_finite() {
        return Err(Error::format("model parameters must be finite"));
    }
    let a = doc.avg_map;
    if a.width == 0 || a.height == 0 || a.values.len() != a.width * a.height {
        return Err(Error::format("avg_map dimensions do not match its values"));
    }
    if a.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::format("avg_map values must lie in [0, 1]"));
    }
    Ok(Model {
        network,
        encoding: doc.encoding,
        bounds: doc.bounds,
        avg: AvgMap {
            width: a.width,
            height: a.height,
            values: a.values,
        },
        metadata: doc.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlpnet::init_network;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(arch: &Architecture, w: usize, h: usize) -> Model {
        Model {
            network: init_network(arch, 17).unwrap(),
            encoding: EncodingConstants::default(),
            bounds: DomainBounds::default(),
            avg: AvgMap {
                width: w,
                height: h,
                values: (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect(),
            },
            metadata: ModelMetadata {
                seed: 17,
                epochs_run: 0,
                best_val_loss: None,
                best_epoch: None,
            },
        }
    }

    fn rows(n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Array2::from_shape_simple_fn((n, 9), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn save_load_round_trip() {
        let m = model(&Architecture::reduced(), 6, 3);
        let bytes = save_model(&m).unwrap();
        let back = load_model(&bytes).unwrap();
        assert_eq!(back, m);
        let x = rows(100);
        assert_eq!(m.network.forward(x.view()).unwrap(), back.network.forward(x.view()).unwrap());
    }

    #[test]
    fn load_rejects_bad_files() {
        let m = model(&Architecture::reduced(), 4, 2);
        let mut doc: serde_json::Value = serde_json::from_slice(&save_model(&m).unwrap()).unwrap();
        let mut v = doc.clone();
        v["format_version"] = 99.into();
        assert!(matches!(load_model(v.to_string().as_bytes()), Err(Error::Format(_))));
        v = doc.clone();
        v["layers"][0]["weights"].as_array_mut().unwrap().pop();
        assert!(matches!(load_model(v.to_string().as_bytes()), Err(Error::Format(_))));
        doc["layers"][1]["rows"] = 63.into();
        doc["layers"][1]["bias"].as_array_mut().unwrap().pop();
        let n = 63 * 64;
        doc["layers"][1]["weights"].as_array_mut().unwrap().truncate(n);
        assert!(matches!(load_model(doc.to_string().as_bytes()), Err(Error::Format(_))));
        assert!(load_model(b"{").is_err());
    }

    #[test]
    fn f32_predictor_tracks_f64_forward() {
        let m = model(&Architecture::reduced(), 4, 2);
        let x = rows(3000);
        let exact = m.network.forward(x.view()).unwrap();
        let fast = m.predictor().predict_rows(&x);
        for (a, b) in exact.iter().zip(fast.iter()) {
            assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{a} vs {b}");
        }
        let empty = Architecture {
            branch_a: vec![],
            branch_b: vec![],
            head: vec![],
        };
        let m = model(&empty, 4, 2);
        let exact = m.network.forward(x.view()).unwrap();
        let fast = m.predictor().predict_rows(&x);
        for (a, b) in exact.iter().zip(fast.iter()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_model_predicts_floor() {
        let mut m = model(&Architecture::reduced(), 8, 4);
        for l in &mut m.network.layers {
            l.weights.fill(0.0);
        }
        let sky = LuminanceMap::uniform(8, 4, 1000.0).unwrap();
        let sun = LuminanceMap::uniform(8, 4, 0.0).unwrap();
        let state = SkyState {
            timestamp: crate::skyctx::Timestamp::new(2001, 6, 1, 12, 30).unwrap(),
            altitude: 50.0,
            azimuth: 0.0,
            dni: 500.0,
            dhi: 100.0,
        };
        let p = m.predict_panorama(&state, &sky, &sun).unwrap();
        assert!(p.values().iter().all(|&v| (v - 1e-2).abs() < 1e-15));
        let wrong = LuminanceMap::uniform(4, 4, 1.0).unwrap();
        assert!(matches!(m.predict_panorama(&state, &wrong, &sun), Err(Error::Data(_))));
    }
}
