//! Row-major 2-d tensor and the handful of dense operations the models use.

/// Dense matrix of `f64` in row-major order. Embedding tables store one row
/// per entity; linear layers store one row per output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Build from a flat row-major vector. Panics if the length does not
    /// match; shapes are fixed by the caller, not by data.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "tensor {rows}x{cols} needs {} values, got {}",
            rows * cols,
            values.len()
        );
        Tensor2 { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }
}

/// `w * x` for a `(out x in)` matrix and an `in`-vector.
pub fn matvec(w: &Tensor2, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols(), x.len(), "matvec shape mismatch");
    (0..w.rows())
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `w^T * y` for a `(out x in)` matrix and an `out`-vector, i.e. the
/// gradient of `matvec` with respect to its input.
pub fn matvec_t(w: &Tensor2, y: &[f64]) -> Vec<f64> {
    assert_eq!(w.rows(), y.len(), "matvec_t shape mismatch");
    let mut out = vec![0.0; w.cols()];
    for (r, &yr) in y.iter().enumerate() {
        for (c, &wrc) in w.row(r).iter().enumerate() {
            out[c] += wrc * yr;
        }
    }
    out
}

/// Accumulate the outer product `y_grad * x^T` into `gw`, the gradient of
/// `matvec(w, x)` with respect to `w`.
pub fn accumulate_outer(gw: &mut Tensor2, y_grad: &[f64], x: &[f64]) {
    assert_eq!(gw.rows(), y_grad.len(), "outer rows mismatch");
    assert_eq!(gw.cols(), x.len(), "outer cols mismatch");
    for (r, &g) in y_grad.iter().enumerate() {
        for (c, &xc) in x.iter().enumerate() {
            gw.row_mut(r)[c] += g * xc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn row_access_is_row_major() {
        let t = Tensor2::from_values(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(t.get(1, 2), 6.0);
    }

    #[test]
    fn matvec_matches_hand_computation() {
        // [[1 2] [3 4] [5 6]] * [1, -1] = [-1, -1, -1]
        let w = Tensor2::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = matvec(&w, &[1.0, -1.0]);
        assert_eq!(y, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn matvec_t_is_transpose_product() {
        let w = Tensor2::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // w^T * [1, 0, -1] = [1-5, 2-6] = [-4, -4]
        let x = matvec_t(&w, &[1.0, 0.0, -1.0]);
        assert_abs_diff_eq!(x[0], -4.0);
        assert_abs_diff_eq!(x[1], -4.0);
    }

    #[test]
    fn outer_accumulates() {
        let mut g = Tensor2::zeros(2, 2);
        accumulate_outer(&mut g, &[1.0, 2.0], &[3.0, 4.0]);
        accumulate_outer(&mut g, &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(g.values(), &[4.0, 5.0, 6.0, 8.0]);
    }

    #[test]
    #[should_panic(expected = "matvec shape mismatch")]
    fn matvec_rejects_bad_shapes() {
        let w = Tensor2::zeros(2, 3);
        matvec(&w, &[1.0, 2.0]);
    }
}
