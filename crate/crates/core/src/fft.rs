//! Zero-padded FFT convolution for Toeplitz kernels in one and two dimensions.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// 1-D linear convolution `y_i = sum_j k[i - j] f_j` for `i, j in 0..n`,
/// with the kernel given on offsets `-(n-1)..=(n-1)`.
pub struct ToeplitzFft {
    n: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl ToeplitzFft {
    /// `kernel[d + n - 1]` holds the weight for offset `d`.
    pub fn new(kernel: &[f64], n: usize) -> Self {
        assert_eq!(kernel.len(), 2 * n - 1);
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::default(); size];
        for (k, &w) in kernel.iter().enumerate() {
            let d = k as isize - (n as isize - 1);
            spectrum[d.rem_euclid(size as isize) as usize] = Complex64::new(w, 0.0);
        }
        fwd.process(&mut spectrum);
        ToeplitzFft {
            n,
            size,
            fwd,
            inv,
            spectrum,
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        let mut buf = vec![Complex64::default(); self.size];
        for (b, &v) in buf.iter_mut().zip(f) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf[..self.n].iter().map(|c| c.re * scale).collect()
    }
}

/// Bank of 1-D Toeplitz kernels sharing one transform size, for sums
/// `sum_k K_k * f_k` evaluated with a single inverse transform.
pub struct ToeplitzBank {
    n: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex64>>,
}

impl ToeplitzBank {
    /// Each kernel on offsets `-(n-1)..=(n-1)`.
    pub fn new(kernels: &[Vec<f64>], n: usize) -> Self {
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let spectra = kernels
            .iter()
            .map(|k| {
                assert_eq!(k.len(), 2 * n - 1);
                let mut s = vec![Complex64::default(); size];
                for (idx, &w) in k.iter().enumerate() {
                    let d = idx as isize - (n as isize - 1);
                    s[d.rem_euclid(size as isize) as usize] = Complex64::new(w, 0.0);
                }
                fwd.process(&mut s);
                s
            })
            .collect();
        ToeplitzBank {
            n,
            size,
            fwd,
            inv,
            spectra,
        }
    }

    /// `sum over (k, f) of K_k * f`.
    pub fn apply_sum<'a>(&self, terms: impl IntoIterator<Item = (usize, &'a [f64])>) -> Vec<f64> {
        let mut acc = vec![Complex64::default(); self.size];
        let mut buf = vec![Complex64::default(); self.size];
        for (k, f) in terms {
            assert_eq!(f.len(), self.n);
            buf.iter_mut().for_each(|b| *b = Complex64::default());
            for (b, &v) in buf.iter_mut().zip(f) {
                b.re = v;
            }
            self.fwd.process(&mut buf);
            for ((a, b), s) in acc.iter_mut().zip(&buf).zip(&self.spectra[k]) {
                *a += b * s;
            }
        }
        self.inv.process(&mut acc);
        let scale = 1.0 / self.size as f64;
        acc[..self.n].iter().map(|c| c.re * scale).collect()
    }
}

/// Causal space-time convolution
/// `out[n][i] = sum_{m <= n} sum_j K[n - m][i - j] S[m][j]` for rows `0..rows`.
///
/// The kernel spectrum is computed once and shared across sources.
pub struct SpaceTimeFft {
    rows: usize,
    cols: usize,
    tsize: usize,
    xsize: usize,
    xfwd: Arc<dyn Fft<f64>>,
    xinv: Arc<dyn Fft<f64>>,
    tfwd: Arc<dyn Fft<f64>>,
    tinv: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl SpaceTimeFft {
    /// `kernels[lag]` for `lag in 0..rows`, each on offsets `-(cols-1)..=(cols-1)`.
    pub fn new(kernels: &[Vec<f64>], rows: usize, cols: usize) -> Self {
        assert_eq!(kernels.len(), rows);
        let tsize = (2 * rows).next_power_of_two();
        let xsize = (2 * cols - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let mut st = SpaceTimeFft {
            rows,
            cols,
            tsize,
            xsize,
            xfwd: planner.plan_fft_forward(xsize),
            xinv: planner.plan_fft_inverse(xsize),
            tfwd: planner.plan_fft_forward(tsize),
            tinv: planner.plan_fft_inverse(tsize),
            spectrum: Vec::new(),
        };
        let mut buf = vec![Complex64::default(); tsize * xsize];
        for (lag, k) in kernels.iter().enumerate() {
            assert_eq!(k.len(), 2 * cols - 1);
            let row = &mut buf[lag * xsize..(lag + 1) * xsize];
            for (idx, &w) in k.iter().enumerate() {
                let d = idx as isize - (cols as isize - 1);
                row[d.rem_euclid(xsize as isize) as usize] = Complex64::new(w, 0.0);
            }
        }
        st.forward(&mut buf, rows);
        st.spectrum = buf;
        st
    }

    fn forward(&self, buf: &mut [Complex64], filled_rows: usize) {
        for r in 0..filled_rows {
            self.xfwd.process(&mut buf[r * self.xsize..(r + 1) * self.xsize]);
        }
        self.columns(buf, &self.tfwd);
    }

    fn columns(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let mut col = vec![Complex64::default(); self.tsize];
        for c in 0..self.xsize {
            for r in 0..self.tsize {
                col[r] = buf[r * self.xsize + c];
            }
            plan.process(&mut col);
            for r in 0..self.tsize {
                buf[r * self.xsize + c] = col[r];
            }
        }
    }

    /// `source` is row-major with `rows * cols` entries.
    pub fn apply(&self, source: &[f64]) -> Vec<f64> {
        assert_eq!(source.len(), self.rows * self.cols);
        let mut buf = vec![Complex64::default(); self.tsize * self.xsize];
        for r in 0..self.rows {
            for c in 0..self.cols {
                buf[r * self.xsize + c].re = source[r * self.cols + c];
            }
        }
        self.forward(&mut buf, self.rows);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.columns(&mut buf, &self.tinv);
        let scale = 1.0 / (self.tsize * self.xsize) as f64;
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            let row = &mut buf[r * self.xsize..(r + 1) * self.xsize];
            self.xinv.process(row);
            for c in 0..self.cols {
                out[r * self.cols + c] = row[c].re * scale;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toeplitz_matches_direct_sum() {
        let n = 7;
        let k: Vec<f64> = (0..2 * n - 1).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let f: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y = ToeplitzFft::new(&k, n).apply(&f);
        for i in 0..n {
            let direct: f64 = (0..n).map(|j| k[i + n - 1 - j] * f[j]).sum();
            assert!((y[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn bank_sum_matches_direct_sum() {
        let n = 6;
        let ks: Vec<Vec<f64>> = (0..3)
            .map(|l| (0..2 * n - 1).map(|i| ((l + 2 * i) % 5) as f64 - 2.0).collect())
            .collect();
        let fs: Vec<Vec<f64>> = (0..3).map(|l| (0..n).map(|i| ((l * n + i) as f64).sin()).collect()).collect();
        let y = ToeplitzBank::new(&ks, n).apply_sum([(2, fs[0].as_slice()), (0, fs[1].as_slice())]);
        for i in 0..n {
            let direct: f64 = (0..n)
                .map(|j| ks[2][i + n - 1 - j] * fs[0][j] + ks[0][i + n - 1 - j] * fs[1][j])
                .sum();
            assert!((y[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn space_time_matches_direct_sum() {
        let (rows, cols) = (5, 4);
        let kernels: Vec<Vec<f64>> = (0..rows)
            .map(|l| (0..2 * cols - 1).map(|i| ((l * 3 + i * 5) % 7) as f64 - 3.0).collect())
            .collect();
        let src: Vec<f64> = (0..rows * cols).map(|k| (k as f64 * 0.7).cos()).collect();
        let out = SpaceTimeFft::new(&kernels, rows, cols).apply(&src);
        for n in 0..rows {
            for i in 0..cols {
                let mut acc = 0.0;
                for m in 0..=n {
                    for j in 0..cols {
                        acc += kernels[n - m][i + cols - 1 - j] * src[m * cols + j];
                    }
                }
                assert!((out[n * cols + i] - acc).abs() < 1e-12, "({n},{i})");
            }
        }
    }
}
