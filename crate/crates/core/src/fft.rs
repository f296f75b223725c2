//! Multi-dimensional FFTs over row-major buffers built from 1D `rustfft` plans.
//! Inverse transforms are normalized by the element count.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Plans for a fixed `rows x cols` transform.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, false);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, true);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }

    pub fn forward_real(&self, data: &Array2<f64>) -> Array2<Complex64> {
        let mut buf = data.mapv(|v| Complex64::new(v, 0.0));
        self.forward(&mut buf);
        buf
    }

    fn run(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.rows, self.cols), "fft buffer has wrong shape");
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let slice = data.as_slice_mut().expect("standard layout");
        row_plan.process(slice);
        let mut transposed = vec![Complex64::new(0.0, 0.0); slice.len()];
        transpose(slice, &mut transposed, self.rows, self.cols);
        col_plan.process(&mut transposed);
        transpose(&transposed, slice, self.cols, self.rows);
    }
}

/// Blocked transpose of a row-major `rows x cols` buffer into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Plans for a fixed `depth x rows x cols` transform over row-major buffers.
#[derive(Clone)]
pub struct Fft3 {
    depth: usize,
    rows: usize,
    cols: usize,
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(depth: usize, rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        let mut plans = |inverse: bool| {
            [depth, rows, cols].map(|n| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
        };
        let fwd = plans(false);
        let inv = plans(true);
        Self {
            depth,
            rows,
            cols,
            fwd,
            inv,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.rows, self.cols)
    }

    /// In-place transform; the inverse is normalized by the element count.
    pub fn process(&self, data: &mut [Complex64], inverse: bool) {
        let (depth, rows, cols) = (self.depth, self.rows, self.cols);
        assert_eq!(data.len(), depth * rows * cols, "fft buffer has wrong length");
        let [along_depth, along_rows, along_cols] = if inverse { &self.inv } else { &self.fwd };
        along_cols.process(data);

        let plane = rows * cols;
        let mut transposed = vec![Complex64::new(0.0, 0.0); plane];
        for slab in data.chunks_exact_mut(plane) {
            transpose(slab, &mut transposed, rows, cols);
            along_rows.process(&mut transposed);
            transpose(&transposed, slab, cols, rows);
        }

        if depth > 1 {
            let mut line = vec![Complex64::new(0.0, 0.0); depth];
            for i in 0..plane {
                for d in 0..depth {
                    line[d] = data[d * plane + i];
                }
                along_depth.process(&mut line);
                for d in 0..depth {
                    data[d * plane + i] = line[d];
                }
            }
        }

        if inverse {
            let scale = 1.0 / data.len() as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// In-place 3D transform of a `depth x rows x cols` row-major buffer.
/// Plans afresh on every call; hold an [`Fft3`] for repeated use.
pub fn fft3(data: &mut [Complex64], depth: usize, rows: usize, cols: usize, inverse: bool) {
    Fft3::new(depth, rows, cols).process(data, inverse);
}

/// Signed frequency (cycles per sample) of FFT bin `k` out of `n`.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n_i = n as isize;
    let signed = if k > (n_i - 1) / 2 { k - n_i } else { k };
    signed as f64 / n as f64
}
