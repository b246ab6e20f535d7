//! Finite-difference checks of the hand-written gradients.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::contrastive::nt_xent_loss;
use crate::corpus::TrackId;
use crate::embed::{CbowExample, W2VConfig, W2VModel};
use crate::error::Result;
use crate::nn::{Mlp, Tensor};
use crate::seed::{rng_for, Rng, Stream};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub n_values: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn result(name: String, analytic: &[f64], numeric: &[f64], threshold: f64) -> CheckResult {
    let err = max_relative_error(analytic, numeric, 1e-6);
    CheckResult {
        name,
        n_values: analytic.len(),
        max_rel_error: err,
        threshold,
        passed: err <= threshold,
    }
}

fn normal_rows(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(rows, cols, data).expect("finite normals")
}

/// NT-Xent gradients w.r.t. both views for an `n × d` batch.
pub fn check_nt_xent(rng: &mut Rng, n: usize, d: usize, tau: f64) -> Result<CheckResult> {
    let zx = normal_rows(rng, n, d);
    let zy = normal_rows(rng, n, d);
    let out = nt_xent_loss(&zx, &zy, tau)?;
    let mut flat = zx.data().to_vec();
    flat.extend_from_slice(zy.data());
    let numeric = central_difference(
        |v| {
            let a = Tensor::new(n, d, v[..n * d].to_vec()).unwrap();
            let b = Tensor::new(n, d, v[n * d..].to_vec()).unwrap();
            nt_xent_loss(&a, &b, tau).map(|o| o.loss).unwrap_or(f64::NAN)
        },
        &flat,
        DEFAULT_STEP,
    );
    let mut analytic = out.grad_x.into_data();
    analytic.extend(out.grad_y.into_data());
    Ok(result(format!("nt_xent n={n} d={d}"), &analytic, &numeric, DEFAULT_THRESHOLD))
}

/// MLP parameter and input gradients for `loss = Σ out ⊙ r` with random `r`.
pub fn check_mlp(rng: &mut Rng, widths: &[usize], batch: usize) -> Result<CheckResult> {
    let mut net = Mlp::new(widths, rng)?;
    // small random biases keep hidden units away from exact zeros
    for l in net.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let x = normal_rows(rng, batch, widths[0]);
    let r = normal_rows(rng, batch, *widths.last().unwrap());
    let loss = |net: &Mlp, x: &Tensor| -> f64 {
        let y = net.infer(x).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    net.forward(&x)?;
    let (grads, gx) = net.backward(&r)?;
    let mut analytic = grads.flat();
    analytic.extend_from_slice(gx.data());

    let sizes = net.param_sizes();
    let mut params: Vec<f64> = Vec::new();
    {
        let mut probe = net.clone();
        for p in probe.params_mut() {
            params.extend_from_slice(p);
        }
    }
    let np = params.len();
    params.extend_from_slice(x.data());
    let numeric = central_difference(
        |v| {
            let mut probe = net.clone();
            let mut off = 0;
            for (p, len) in probe.params_mut().into_iter().zip(&sizes) {
                p.copy_from_slice(&v[off..off + len]);
                off += len;
            }
            let xi = Tensor::new(x.rows(), x.cols(), v[np..].to_vec()).unwrap();
            loss(&probe, &xi)
        },
        &params,
        DEFAULT_STEP,
    );
    Ok(result(format!("mlp {widths:?} batch={batch}"), &analytic, &numeric, DEFAULT_THRESHOLD))
}

/// CBOW negative-sampling gradient w.r.t. context input rows and output rows.
pub fn check_cbow(rng: &mut Rng, vocab: usize, dim: usize) -> Result<CheckResult> {
    let ids: Vec<TrackId> = (0..vocab).map(|i| TrackId::new(format!("v{i}")).unwrap()).collect();
    let cfg = W2VConfig {
        dim,
        ..W2VConfig::default()
    };
    let mut m = W2VModel::init(ids, cfg, rng.random())?;
    for i in 0..vocab {
        for v in m.input_row_mut(i) {
            *v = StandardNormal.sample(rng);
        }
        for v in m.output_row_mut(i) {
            *v = StandardNormal.sample(rng);
        }
    }
    let context: Vec<usize> = (1..vocab.min(4)).collect();
    let negatives: Vec<usize> = (vocab.min(4)..vocab).take(3).collect();
    let ex = CbowExample {
        context: &context,
        center: 0,
        negatives: &negatives,
    };
    let g = m.cbow_grad(&ex);
    let mut analytic = Vec::new();
    for _ in &context {
        analytic.extend_from_slice(&g.context_row);
    }
    for (_, row) in &g.output_rows {
        analytic.extend_from_slice(row);
    }
    let rows: Vec<(bool, usize)> = context
        .iter()
        .map(|&c| (true, c))
        .chain(g.output_rows.iter().map(|(w, _)| (false, *w)))
        .collect();
    let mut flat = Vec::new();
    for &(is_in, r) in &rows {
        flat.extend_from_slice(if is_in { m.input_row(r) } else { m.output_row(r) });
    }
    let numeric = central_difference(
        |v| {
            let mut probe = m.clone();
            for (k, &(is_in, r)) in rows.iter().enumerate() {
                let src = &v[k * dim..(k + 1) * dim];
                if is_in {
                    probe.input_row_mut(r).copy_from_slice(src);
                } else {
                    probe.output_row_mut(r).copy_from_slice(src);
                }
            }
            probe.cbow_loss(&ex)
        },
        &flat,
        DEFAULT_STEP,
    );
    Ok(result(format!("cbow vocab={vocab} dim={dim}"), &analytic, &numeric, DEFAULT_THRESHOLD))
}

/// The suite run by the `gradcheck` subcommand.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, Stream::Init, 1000);
    let mut out = Vec::new();
    for n in [2, 4, 8] {
        for d in [3, 16] {
            out.push(check_nt_xent(&mut rng, n, d, 0.1)?);
        }
    }
    for widths in [vec![4, 3], vec![5, 8, 3], vec![6, 7, 5, 2]] {
        out.push(check_mlp(&mut rng, &widths, 3)?);
    }
    out.push(check_cbow(&mut rng, 8, 5)?);
    Ok(out)
}
