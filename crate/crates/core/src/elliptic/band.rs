use crate::error::{Error, Result};

/// Cholesky factor `L` of a symmetric positive definite band matrix.
///
/// Row `i` keeps columns `i - bw ..= i` contiguously, so both the
/// factorization inner product and the triangular solves stream through
/// memory. With natural ordering on an `n × n` grid the 5-point stencil has
/// bandwidth `n`, and fill stays inside the band.
#[derive(Debug)]
pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    /// `entries` yields lower-triangle entries `(row, col, value)` with
    /// `row - bw <= col <= row`. Repeated entries are summed.
    pub(crate) fn factor(
        n: usize,
        bw: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let stride = bw + 1;
        let mut data = vec![0.0; n * stride];
        for (r, c, v) in entries {
            debug_assert!(c <= r && r - c <= bw);
            data[r * stride + c + bw - r] += v;
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let k0 = lo;
                let ri = i * stride + bw - i;
                let rj = j * stride + bw - j;
                let mut s = data[ri + j];
                for k in k0..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                    data[ri + i] = s.sqrt();
                } else {
                    data[ri + j] = s / data[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, data })
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (bw, stride) = (self.bw, self.bw + 1);
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let ri = i * stride + bw - i;
            let mut s = b[i];
            for k in lo..i {
                s -= self.data[ri + k] * b[k];
            }
            b[i] = s / self.data[ri + i];
        }
        for i in (0..self.n).rev() {
            let lo = i.saturating_sub(bw);
            let ri = i * stride + bw - i;
            let xi = b[i] / self.data[ri + i];
            b[i] = xi;
            for k in lo..i {
                b[k] -= self.data[ri + k] * xi;
            }
        }
    }
}
