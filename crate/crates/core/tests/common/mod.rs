//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use lumen_core::encoding::N_FEATURES;
use lumen_core::mlpnet::{init_network, loss, Architecture, Network};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradProblem {
    pub rows: Array2<f64>,
    pub targets: Vec<f64>,
    pub omega: Vec<f64>,
}

pub fn random_problem(n: usize, seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = Array2::from_shape_fn((n, N_FEATURES), |_| rng.random_range(0.0..1.0));
    let targets = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let omega = (0..n).map(|_| rng.random_range(0.05..1.0) * 1e-3).collect();
    GradProblem { rows, targets, omega }
}

fn total_loss(net: &Network, p: &GradProblem, lambda: f64) -> f64 {
    let pred = net.forward(p.rows.view()).unwrap();
    loss(pred.as_slice().unwrap(), &p.targets, &p.omega, lambda).unwrap().total
}

/// Largest relative difference between analytic and central-difference
/// gradients over every parameter. Pairs where both magnitudes are below
/// `floor` are skipped. Biases are redrawn so no pre-activation sits on a
/// ReLU kink.
pub fn max_gradient_error(arch: &Architecture, seed: u64, lambda: f64, h: f64, floor: f64) -> f64 {
    let mut net = init_network(arch, seed).unwrap();
    // zero biases put pre-activations of dead rows exactly on the ReLU kink
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(0.05..0.3));
    }
    let p = random_problem(48, seed.wrapping_add(1000));
    let (_, grads) = net.gradients(p.rows.view(), &p.targets, &p.omega, lambda).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for l in 0..net.layers.len() {
        let (o, i) = net.layers[l].weights.dim();
        for r in 0..o {
            for c in 0..=i {
                let read = |n: &Network| if c < i { n.layers[l].weights[[r, c]] } else { n.layers[l].bias[r] };
                let orig = read(&probe);
                let set = |n: &mut Network, v: f64| {
                    if c < i {
                        n.layers[l].weights[[r, c]] = v
                    } else {
                        n.layers[l].bias[r] = v
                    }
                };
                set(&mut probe, orig + h);
                let up = total_loss(&probe, &p, lambda);
                set(&mut probe, orig - h);
                let down = total_loss(&probe, &p, lambda);
                set(&mut probe, orig);
                let numeric = (up - down) / (2.0 * h);
                let analytic = if c < i { grads[l].weights[[r, c]] } else { grads[l].bias[r] };
                let scale = numeric.abs().max(analytic.abs());
                if scale > floor {
                    let e = (numeric - analytic).abs() / scale;
                    if e > 1e-4 && std::env::var_os("GRAD_DEBUG").is_some() {
                        eprintln!("layer {l} ({o}x{i}) r{r} c{c}: numeric {numeric:e} analytic {analytic:e}");
                    }
                    worst = worst.max(e);
                }
            }
        }
    }
    worst
}

/// A random small architecture with 0-3 layers per part and widths 2-9.
pub fn random_architecture(rng: &mut ChaCha8Rng) -> Architecture {
    let mut widths = |max_layers: usize| -> Vec<usize> {
        let n = rng.random_range(1..=max_layers);
        (0..n).map(|_| rng.random_range(2..10)).collect()
    };
    Architecture {
        branch_a: widths(3),
        branch_b: widths(2),
        head: widths(2),
    }
}

/// Solves the symmetric positive-definite system `a x = b` by Cholesky.
pub fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        assert!(d > 0.0, "matrix is not positive definite");
        a[j][j] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / a[j][j];
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    b
}

/// `ω`-weighted least squares of `t` on `[x, 1]`.
pub fn weighted_least_squares(x: &Array2<f64>, t: &[f64], w: &[f64]) -> Vec<f64> {
    let m = x.ncols() + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (r, row) in x.rows().into_iter().enumerate() {
        let z: Vec<f64> = row.iter().copied().chain([1.0]).collect();
        for i in 0..m {
            atb[i] += w[r] * z[i] * t[r];
            for j in 0..m {
                ata[i][j] += w[r] * z[i] * z[j];
            }
        }
    }
    solve_spd(ata, atb)
}
