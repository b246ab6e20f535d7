use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone)]
pub struct NtXentOutput {
    pub loss: f64,
    pub grad_x: Tensor,
    pub grad_y: Tensor,
}

/// Symmetric NT-Xent over the `2N` views `[zx; zy]`.
///
/// View `i` has its partner `i ± N` as positive and the other `2N − 2` views
/// as negatives; similarities are cosines divided by `tau`. The loss is the
/// mean of the `2N` cross-entropy terms. Gradients are exact.
pub fn nt_xent_loss(zx: &Tensor, zy: &Tensor, tau: f64) -> Result<NtXentOutput> {
    if zx.shape() != zy.shape() {
        return Err(Error::Shape {
            op: "nt_xent",
            expected: format!("{:?}", zx.shape()),
            got: format!("{:?}", zy.shape()),
        });
    }
    let n = zx.rows();
    if n < 2 {
        return Err(Error::Validation(format!("NT-Xent needs at least 2 pairs, got {n}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let d = zx.cols();
    let m = 2 * n;
    let z = zx.vstack(zy)?;
    z.check_finite("nt_xent_input")?;

    let mut u = z.clone();
    let mut norms = vec![0.0; m];
    for i in 0..m {
        let row = u.row_mut(i);
        let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::Validation(format!("zero-norm projection at row {i}")));
        }
        row.iter_mut().for_each(|v| *v /= nrm);
        norms[i] = nrm;
    }
    let sim = u.matmul_nt_slice(u.data(), m);
    let partner = |i: usize| if i < n { i + n } else { i - n };

    // g[i][k] = softmax_ik - [k = partner(i)], diagonal excluded
    let mut g = vec![0.0; m * m];
    let mut loss = 0.0;
    for i in 0..m {
        let s = sim.row(i);
        let max = (0..m)
            .filter(|&k| k != i)
            .map(|k| s[k] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..m).filter(|&k| k != i).map(|k| (s[k] / tau - max).exp()).sum();
        let lse = max + denom.ln();
        loss += lse - s[partner(i)] / tau;
        let gi = &mut g[i * m..(i + 1) * m];
        for k in 0..m {
            if k != i {
                gi[k] = (s[k] / tau - lse).exp();
            }
        }
        gi[partner(i)] -= 1.0;
    }
    loss /= m as f64;

    // dL/du_i = (1 / (m τ)) Σ_k (g_ik + g_ki) u_k
    let scale = 1.0 / (m as f64 * tau);
    let mut sym = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            sym[i * m + k] = (g[i * m + k] + g[k * m + i]) * scale;
        }
    }
    let sym = Tensor::new(m, m, sym)?;
    let du = sym.matmul(&u)?;

    let mut grad = Tensor::zeros(m, d);
    for i in 0..m {
        let ui = u.row(i);
        let dui = du.row(i);
        let proj: f64 = ui.iter().zip(dui).map(|(a, b)| a * b).sum();
        for ((o, a), b) in grad.row_mut(i).iter_mut().zip(ui).zip(dui) {
            *o = (b - a * proj) / norms[i];
        }
    }
    grad.check_finite("nt_xent_backward")?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "nt_xent" });
    }
    let (grad_x, grad_y) = grad.split_rows(n);
    Ok(NtXentOutput {
        loss,
        grad_x,
        grad_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct softmax over cosine similarities, no log-sum-exp tricks.
    fn oracle(zx: &[Vec<f64>], zy: &[Vec<f64>], tau: f64) -> f64 {
        let views: Vec<&Vec<f64>> = zx.iter().chain(zy).collect();
        let m = views.len();
        let n = zx.len();
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for i in 0..m {
            let p = if i < n { i + n } else { i - n };
            let num = (cos(views[i], views[p]) / tau).exp();
            let den: f64 = (0..m).filter(|&k| k != i).map(|k| (cos(views[i], views[k]) / tau).exp()).sum();
            total += -(num / den).ln();
        }
        total / m as f64
    }

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_views_give_uniform_loss() {
        for n in 2..6 {
            let rows = vec![vec![0.6, 0.8]; n];
            let out = nt_xent_loss(&t(&rows), &t(&rows), 0.1).unwrap();
            let expected = ((2 * n - 1) as f64).ln();
            assert!((out.loss - expected).abs() < 1e-12, "{n}");
        }
        let rows = vec![vec![1.0, 0.0]; 2];
        let out = nt_xent_loss(&t(&rows), &t(&rows), 0.1).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pairs_match_oracle() {
        let zx = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = nt_xent_loss(&t(&zx), &t(&zx), 0.1).unwrap();
        let expected = oracle(&zx, &zx, 0.1);
        assert!(((out.loss - expected) / expected).abs() < 1e-9);
        assert!(out.loss < 3f64.ln());
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matches_direct_softmax_on_random_batches() {
        for seed in 0..20 {
            let n = 2 + seed as usize % 5;
            let (zx, zy) = (random(n, 5, seed), random(n, 5, seed + 100));
            let rows = |t: &Tensor| t.iter_rows().map(<[f64]>::to_vec).collect::<Vec<_>>();
            let want = oracle(&rows(&zx), &rows(&zy), 0.1);
            let got = nt_xent_loss(&zx, &zy, 0.1).unwrap().loss;
            assert!(((got - want) / want).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_and_scale_invariant() {
        let (zx, zy) = (random(6, 4, 1), random(6, 4, 2));
        let base = nt_xent_loss(&zx, &zy, 0.1).unwrap().loss;
        let perm = [3, 0, 5, 1, 4, 2];
        let pick = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let permuted = nt_xent_loss(&pick(&zx), &pick(&zy), 0.1).unwrap().loss;
        assert!((base - permuted).abs() < 1e-12);
        let mut scaled = zx.clone();
        scaled.row_mut(2).iter_mut().for_each(|v| *v *= 7.5);
        let s = nt_xent_loss(&scaled, &zy, 0.1).unwrap().loss;
        assert!(((base - s) / base).abs() < 1e-9);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let one = t(&[vec![1.0, 0.0]]);
        assert!(nt_xent_loss(&one, &one, 0.1).is_err());
        let zx = t(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let zy = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(nt_xent_loss(&zx, &zy, 0.1).unwrap_err().to_string().contains("zero-norm"));
        assert!(nt_xent_loss(&zy, &zy, 0.0).is_err());
    }
}
