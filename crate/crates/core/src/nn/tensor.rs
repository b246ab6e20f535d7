use crate::error::{Error, Result};

/// Row-major 2-D tensor. Batches are rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "tensor",
                expected: format!("{} values for {rows}x{cols}", rows * cols),
                got: data.len().to_string(),
            });
        }
        let t = Tensor { rows, cols, data };
        t.check_finite("tensor")?;
        Ok(t)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    expected: format!("{cols} columns"),
                    got: r.len().to_string(),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "vstack",
                expected: format!("{} columns", self.cols),
                got: other.cols.to_string(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Splits into the first `n` rows and the rest.
    pub fn split_rows(mut self, n: usize) -> (Tensor, Tensor) {
        let n = n.min(self.rows);
        let tail = self.data.split_off(n * self.cols);
        (
            Tensor {
                rows: n,
                cols: self.cols,
                data: self.data,
            },
            Tensor {
                rows: self.rows - n,
                cols: self.cols,
                data: tail,
            },
        )
    }

    /// `self · w` where `w` is `cols × m`, given as a row-major slice.
    pub fn matmul_slice(&self, w: &[f64], m: usize) -> Tensor {
        debug_assert_eq!(w.len(), self.cols * m);
        let mut out = vec![0.0; self.rows * m];
        for (xi, oi) in self.data.chunks_exact(self.cols.max(1)).zip(out.chunks_exact_mut(m.max(1))) {
            for (k, &a) in xi.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let wk = &w[k * m..(k + 1) * m];
                for (o, &b) in oi.iter_mut().zip(wk) {
                    *o += a * b;
                }
            }
        }
        Tensor {
            rows: self.rows,
            cols: m,
            data: out,
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                expected: format!("{} rows on the right", self.cols),
                got: other.rows.to_string(),
            });
        }
        let out = self.matmul_slice(&other.data, other.cols);
        out.check_finite("matmul")?;
        Ok(out)
    }

    /// `selfᵀ · other`, accumulated into a row-major `cols × other.cols` buffer.
    pub fn matmul_tn_into(&self, other: &Tensor, out: &mut [f64]) {
        let m = other.cols;
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(out.len(), self.cols * m);
        for (xi, gi) in self.iter_rows().zip(other.iter_rows()) {
            for (k, &a) in xi.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let ok = &mut out[k * m..(k + 1) * m];
                for (o, &b) in ok.iter_mut().zip(gi) {
                    *o += a * b;
                }
            }
        }
    }

    /// `self · wᵀ` where `w` is row-major `n × cols`.
    pub fn matmul_nt_slice(&self, w: &[f64], n: usize) -> Tensor {
        debug_assert_eq!(w.len(), n * self.cols);
        let mut out = vec![0.0; self.rows * n];
        for (gi, oi) in self.iter_rows().zip(out.chunks_exact_mut(n.max(1))) {
            for (o, wk) in oi.iter_mut().zip(w.chunks_exact(self.cols.max(1))) {
                *o = gi.iter().zip(wk).map(|(a, b)| a * b).sum();
            }
        }
        Tensor {
            rows: self.rows,
            cols: n,
            data: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[21.0, 24.0, 27.0, 47.0, 54.0, 61.0]);
        assert!(b.matmul(&a).is_err());

        let mut tn = vec![0.0; 6];
        a.matmul_tn_into(&b, &mut tn);
        // aᵀ b = [[1,3],[2,4]]·b
        assert_eq!(tn, [29.0, 33.0, 37.0, 42.0, 48.0, 54.0]);

        // a·aᵀ
        let nt = a.matmul_nt_slice(a.data(), 2);
        assert_eq!(nt.data(), &[5.0, 11.0, 11.0, 25.0]);
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        assert!(Tensor::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            Tensor::new(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn stack_and_split() {
        let a = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = a.vstack(&b).unwrap();
        assert_eq!(s.shape(), [3, 2]);
        let (x, y) = s.split_rows(1);
        assert_eq!(x, a);
        assert_eq!(y, b);
    }
}
