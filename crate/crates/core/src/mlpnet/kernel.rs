//! Single-precision dense-layer kernel used for panorama inference.
//!
//! Computes `out = ReLU(a · Wᵀ + b)` with `W` pre-packed into column panels.
//! Summation order is fixed by the blocking constants, so results are
//! reproducible on a given instruction set.

use ndarray::{Array1, Array2};

const NR: usize = 32;
const MR: usize = 12;
const KC: usize = 256;
const MC: usize = 120;

/// A dense layer's weights in `NR`-column panels, `k`-major within a panel.
#[derive(Debug, Clone)]
pub struct PackedDense {
    k: usize,
    m: usize,
    panels: Vec<f32>,
    bias: Vec<f32>,
}

impl PackedDense {
    /// Packs a `m × k` weight matrix and its bias.
    pub fn pack(weights: &Array2<f64>, bias: &Array1<f64>) -> Self {
        let (m, k) = weights.dim();
        let n_panels = m.div_ceil(NR);
        let mut panels = vec![0f32; n_panels * k * NR];
        let mut b = vec![0f32; n_panels * NR];
        for j in 0..m {
            let (p, jj) = (j / NR, j % NR);
            let base = p * k * NR;
            for kk in 0..k {
                panels[base + kk * NR + jj] = weights[[j, kk]] as f32;
            }
            b[j] = bias[j] as f32;
        }
        Self { k, m, panels, bias: b }
    }

    pub fn inputs(&self) -> usize {
        self.k
    }

    pub fn outputs(&self) -> usize {
        self.m
    }
}

type MicroKernel = unsafe fn(&Tile, *const f32, *const f32, *mut f32);

/// Shape and epilogue flags of one `MR × NR` tile.
struct Tile {
    kc: usize,
    ldc: usize,
    rows: usize,
    cols: usize,
    first: bool,
    last: bool,
    bias: *const f32,
}

/// `out[i·ldc + col_off + j] = ReLU(Σ_k a[i·lda + k]·W[j, k] + b[j])` for
/// `i < n`, `j < layer.outputs()`.
pub fn dense_relu(
    a: &[f32],
    lda: usize,
    n: usize,
    layer: &PackedDense,
    out: &mut [f32],
    ldc: usize,
    col_off: usize,
) {
    let (k, m) = (layer.k, layer.m);
    assert!(lda >= k && ldc >= col_off + m);
    assert!(n == 0 || a.len() >= (n - 1) * lda + k);
    assert!(n == 0 || out.len() >= (n - 1) * ldc + col_off + m);
    if n == 0 || m == 0 {
        return;
    }
    if k == 0 {
        for i in 0..n {
            for j in 0..m {
                out[i * ldc + col_off + j] = layer.bias[j].max(0.0);
            }
        }
        return;
    }
    let kernel = select_kernel();
    let n_panels = m.div_ceil(NR);
    let mut apack = vec![0f32; MC.div_ceil(MR) * MR * KC];
    let mut i0 = 0;
    while i0 < n {
        let mc = MC.min(n - i0);
        let micro = mc.div_ceil(MR);
        let mut p0 = 0;
        while p0 < k {
            let kc = KC.min(k - p0);
            for u in 0..micro {
                let dst = &mut apack[u * MR * kc..(u + 1) * MR * kc];
                for r in 0..MR {
                    let row = i0 + u * MR + r;
                    if row < n {
                        let src = &a[row * lda + p0..row * lda + p0 + kc];
                        for (p, &v) in src.iter().enumerate() {
                            dst[p * MR + r] = v;
                        }
                    } else {
                        for p in 0..kc {
                            dst[p * MR + r] = 0.0;
                        }
                    }
                }
            }
            for panel in 0..n_panels {
                let bp = &layer.panels[panel * k * NR + p0 * NR..];
                let cols = NR.min(m - panel * NR);
                for u in 0..micro {
                    let row0 = i0 + u * MR;
                    let tile = Tile {
                        kc,
                        ldc,
                        rows: MR.min(n - row0),
                        cols,
                        first: p0 == 0,
                        last: p0 + kc == k,
                        bias: layer.bias[panel * NR..].as_ptr(),
                    };
                    let c = out[row0 * ldc + col_off + panel * NR..].as_mut_ptr();
                    // SAFETY: the packed panels hold kc·NR values from bp, apack holds
                    // MR·kc values per micro panel, and the tile writes only rows·cols
                    // entries that the asserts above keep inside `out`.
                    unsafe { kernel(&tile, apack[u * MR * kc..].as_ptr(), bp.as_ptr(), c) };
                }
            }
            p0 += kc;
        }
        i0 += mc;
    }
}

fn select_kernel() -> MicroKernel {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") {
            return avx512::kernel;
        }
    }
    kernel_portable
}

unsafe fn kernel_portable(t: &Tile, ap: *const f32, bp: *const f32, c: *mut f32) {
    let mut acc = [[0f32; NR]; MR];
    for p in 0..t.kc {
        let b = std::slice::from_raw_parts(bp.add(p * NR), NR);
        let a = std::slice::from_raw_parts(ap.add(p * MR), MR);
        for r in 0..MR {
            for j in 0..NR {
                acc[r][j] += a[r] * b[j];
            }
        }
    }
    for (r, row) in acc.iter().enumerate().take(t.rows) {
        let cp = c.add(r * t.ldc);
        for (j, &v) in row.iter().enumerate().take(t.cols) {
            let mut v = v;
            if !t.first {
                v += *cp.add(j);
            }
            if t.last {
                v = (v + *t.bias.add(j)).max(0.0);
            }
            *cp.add(j) = v;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx512 {
    use super::{Tile, MR, NR};
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn kernel(t: &Tile, ap: *const f32, bp: *const f32, c: *mut f32) {
        let mut acc = [[_mm512_setzero_ps(); 2]; MR];
        for p in 0..t.kc {
            let b0 = _mm512_loadu_ps(bp.add(p * NR));
            let b1 = _mm512_loadu_ps(bp.add(p * NR + 16));
            let a = ap.add(p * MR);
            for (r, acc_r) in acc.iter_mut().enumerate() {
                let av = _mm512_set1_ps(*a.add(r));
                acc_r[0] = _mm512_fmadd_ps(av, b0, acc_r[0]);
                acc_r[1] = _mm512_fmadd_ps(av, b1, acc_r[1]);
            }
        }
        let m0: __mmask16 = if t.cols >= 16 { 0xffff } else { ((1u32 << t.cols) - 1) as __mmask16 };
        let m1: __mmask16 = if t.cols >= NR {
            0xffff
        } else if t.cols > 16 {
            ((1u32 << (t.cols - 16)) - 1) as __mmask16
        } else {
            0
        };
        let bias0 = _mm512_maskz_loadu_ps(m0, t.bias);
        let bias1 = _mm512_maskz_loadu_ps(m1, t.bias.add(16));
        let zero = _mm512_setzero_ps();
        for (r, acc_r) in acc.iter().enumerate().take(t.rows) {
            let cp = c.add(r * t.ldc);
            let (mut v0, mut v1) = (acc_r[0], acc_r[1]);
            if !t.first {
                v0 = _mm512_add_ps(v0, _mm512_maskz_loadu_ps(m0, cp));
                v1 = _mm512_add_ps(v1, _mm512_maskz_loadu_ps(m1, cp.add(16)));
            }
            if t.last {
                v0 = _mm512_max_ps(_mm512_add_ps(v0, bias0), zero);
                v1 = _mm512_max_ps(_mm512_add_ps(v1, bias1), zero);
            }
            _mm512_mask_storeu_ps(cp, m0, v0);
            _mm512_mask_storeu_ps(cp.add(16), m1, v1);
        }
    }
}
