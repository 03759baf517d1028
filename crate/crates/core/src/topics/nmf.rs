use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

use super::{DenseMatrix, TfidfMatrix, TopicsError};

pub const NMF_MAGIC: &[u8] = b"covkg-nmf v1\n";

// Above this many multiply-adds the residual is evaluated through the trace
// identity instead of materializing W·H.
const DENSE_RESIDUAL_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfConfig {
    pub topics: usize,
    pub max_iters: usize,
    /// Stop once the relative change of the error falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig { topics: 100, max_iters: 200, tol: 1e-4, seed: 0 }
    }
}

/// Nonnegative factors `X ≈ W·H`: `W` is documents × topics, `H` is topics × terms.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel<T> {
    pub w: DenseMatrix<T>,
    pub h: DenseMatrix<T>,
    /// Frobenius error at initialization and after every iteration.
    pub errors: Vec<T>,
}

impl<T: Scalar> NmfModel<T> {
    pub fn topics(&self) -> usize {
        self.h.rows()
    }

    pub fn reconstruction_error(&self) -> T {
        *self.errors.last().expect("at least the initial error")
    }
}

fn wt_x<T: Scalar>(x: &TfidfMatrix<T>, w: &DenseMatrix<T>) -> DenseMatrix<T> {
    let u = w.cols();
    let mut out = DenseMatrix::zeros(u, x.n_terms());
    for i in 0..x.n_docs() {
        let wrow = w.row(i);
        for &(j, v) in x.row(i) {
            for (k, &wik) in wrow.iter().enumerate() {
                out.set(k, j, out.get(k, j) + wik * v);
            }
        }
    }
    out
}

fn x_ht<T: Scalar>(x: &TfidfMatrix<T>, h: &DenseMatrix<T>) -> DenseMatrix<T> {
    let u = h.rows();
    let mut out = DenseMatrix::zeros(x.n_docs(), u);
    for i in 0..x.n_docs() {
        let orow = out.row_mut(i);
        for &(j, v) in x.row(i) {
            for (k, o) in orow.iter_mut().enumerate() {
                *o = *o + v * h.get(k, j);
            }
        }
    }
    out
}

/// ‖X − W·H‖_F
pub fn frobenius_error<T: Scalar>(x: &TfidfMatrix<T>, w: &DenseMatrix<T>, h: &DenseMatrix<T>) -> T {
    let (m, n, u) = (x.n_docs(), x.n_terms(), h.rows());
    if m.saturating_mul(n).saturating_mul(u.max(1)) <= DENSE_RESIDUAL_LIMIT {
        let wh = w.matmul(h);
        let mut acc = T::zero();
        for i in 0..m {
            let whrow = wh.row(i);
            let mut sparse = x.row(i).iter().peekable();
            for (j, &p) in whrow.iter().enumerate() {
                let xv = match sparse.peek() {
                    Some(&&(c, v)) if c == j => {
                        sparse.next();
                        v
                    }
                    _ => T::zero(),
                };
                acc = acc + (xv - p) * (xv - p);
            }
        }
        return acc.sqrt();
    }
    // ‖X‖² − 2⟨X, WH⟩ + ⟨WᵀW, HHᵀ⟩
    let mut xx = T::zero();
    let mut cross = T::zero();
    for i in 0..m {
        for &(j, v) in x.row(i) {
            xx = xx + v * v;
            let p = (0..u).fold(T::zero(), |a, k| a + w.get(i, k) * h.get(k, j));
            cross = cross + v * p;
        }
    }
    let wtw = w.gram();
    let hht = h.outer_gram();
    let quad = wtw.as_slice().iter().zip(hht.as_slice()).fold(T::zero(), |a, (&p, &q)| a + p * q);
    (xx - cross - cross + quad).max(T::zero()).sqrt()
}

// target ← target ⊙ num ⊘ den; entries with a zero denominator are kept.
fn multiplicative_step<T: Scalar>(target: &mut DenseMatrix<T>, num: &DenseMatrix<T>, den: &DenseMatrix<T>) {
    for i in 0..target.rows() {
        for j in 0..target.cols() {
            let d = den.get(i, j);
            if d > T::zero() {
                target.set(i, j, target.get(i, j) * num.get(i, j) / d);
            }
        }
    }
}

/// Frobenius-objective NMF by multiplicative updates from a seeded uniform
/// initialization scaled by `sqrt(mean(X)/u)`.
pub fn nmf_fit<T: Scalar>(x: &TfidfMatrix<T>, config: &NmfConfig) -> Result<NmfModel<T>, TopicsError> {
    let (m, n, u) = (x.n_docs(), x.n_terms(), config.topics);
    if u < 1 || u > m.min(n) {
        return Err(TopicsError::TopicCount { topics: u, docs: m, terms: n });
    }
    let total = (0..m).flat_map(|i| x.row(i)).fold(T::zero(), |a, &(_, v)| a + v);
    let mean = total / T::lit((m * n) as f64);
    let scale = (mean / T::lit(u as f64)).sqrt().to_f64_lossless();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows, cols| {
        let data = (0..rows * cols).map(|_| T::lit(scale * rng.random::<f64>())).collect();
        DenseMatrix::from_vec(rows, cols, data)
    };
    let mut w = draw(m, u);
    let mut h = draw(u, n);

    let mut errors = vec![frobenius_error(x, &w, &h)];
    let tol = T::lit(config.tol);
    for _ in 0..config.max_iters {
        let num = wt_x(x, &w);
        let den = w.gram().matmul(&h);
        multiplicative_step(&mut h, &num, &den);

        let num = x_ht(x, &h);
        let den = w.matmul(&h.outer_gram());
        multiplicative_step(&mut w, &num, &den);

        let err = frobenius_error(x, &w, &h);
        let prev = *errors.last().expect("nonempty");
        errors.push(err);
        if prev == T::zero() || (prev - err).abs() / prev < tol {
            break;
        }
    }
    Ok(NmfModel { w, h, errors })
}

fn write_matrix<T: Scalar, W: Write>(m: &DenseMatrix<T>, out: &mut W) -> std::io::Result<()> {
    for &v in m.as_slice() {
        out.write_all(&v.to_f64_lossless().to_le_bytes())?;
    }
    Ok(())
}

/// Writes `W` and `H` after the magic line and a `(m, u, n)` header.
pub fn save_nmf<T: Scalar, W: Write>(model: &NmfModel<T>, mut out: W) -> std::io::Result<()> {
    out.write_all(NMF_MAGIC)?;
    for d in [model.w.rows(), model.w.cols(), model.h.cols()] {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    write_matrix(&model.w, &mut out)?;
    write_matrix(&model.h, &mut out)?;
    out.flush()
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, TopicsError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(|_| TopicsError::Truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_matrix<T: Scalar, R: Read>(
    input: &mut R,
    rows: usize,
    cols: usize,
) -> Result<DenseMatrix<T>, TopicsError> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let mut b = [0u8; 8];
        input.read_exact(&mut b).map_err(|_| TopicsError::Truncated)?;
        data.push(T::lit(f64::from_le_bytes(b)));
    }
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

/// Reads factors written by [`save_nmf`]. The error trace is not stored; the
/// loaded model carries its final reconstruction error only if recomputed.
pub fn load_nmf<T: Scalar, R: Read>(mut input: R) -> Result<(DenseMatrix<T>, DenseMatrix<T>), TopicsError> {
    let mut magic = vec![0u8; NMF_MAGIC.len()];
    input.read_exact(&mut magic).map_err(|_| TopicsError::Truncated)?;
    if magic != NMF_MAGIC {
        return Err(TopicsError::BadMagic);
    }
    let m = read_u64(&mut input)? as usize;
    let u = read_u64(&mut input)? as usize;
    let n = read_u64(&mut input)? as usize;
    let w = read_matrix(&mut input, m, u)?;
    let h = read_matrix(&mut input, u, n)?;
    Ok((w, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn cfg(topics: usize, max_iters: usize) -> NmfConfig {
        NmfConfig { topics, max_iters, tol: 0.0, seed: 7 }
    }

    #[test]
    fn identity_is_factorized_exactly() {
        let x = TfidfMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let model = nmf_fit::<f64>(&x, &cfg(2, 5000)).unwrap();
        assert!(model.reconstruction_error() < 1e-6, "{}", model.reconstruction_error());
    }

    #[test]
    fn zero_matrix_stays_zero() {
        let x = TfidfMatrix::<f64>::from_rows(3, vec![vec![], vec![], vec![]]);
        let model = nmf_fit(&x, &cfg(2, 10)).unwrap();
        assert_eq!(model.errors[0], 0.0);
        assert!(model.w.matmul(&model.h).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn topic_count_is_checked() {
        let x = TfidfMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]));
        assert!(nmf_fit(&x, &cfg(0, 1)).is_err());
        assert!(nmf_fit(&x, &cfg(3, 1)).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let x = TfidfMatrix::from_dense(&DenseMatrix::from_rows(&[
            vec![1.0f64, 0.5, 0.0],
            vec![0.0, 0.2, 0.9],
            vec![0.3, 0.0, 0.4],
        ]));
        let a = nmf_fit(&x, &cfg(2, 50)).unwrap();
        let b = nmf_fit(&x, &cfg(2, 50)).unwrap();
        assert_eq!(a, b);
        let c = nmf_fit(&x, &NmfConfig { seed: 8, ..cfg(2, 50) }).unwrap();
        assert_ne!(a.w, c.w);
    }

    #[test]
    fn trace_error_agrees_with_dense_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseMatrix::from_vec(6, 5, (0..30).map(|_| rng.random::<f64>()).collect());
        let x = TfidfMatrix::from_dense(&dense);
        let w = DenseMatrix::from_vec(6, 2, (0..12).map(|_| rng.random::<f64>()).collect());
        let h = DenseMatrix::from_vec(2, 5, (0..10).map(|_| rng.random::<f64>()).collect());
        let direct = dense.frobenius_distance(&w.matmul(&h));
        assert!((frobenius_error(&x, &w, &h) - direct).abs() < 1e-12);
        // force the trace path through a large synthetic shape
        let big = TfidfMatrix::from_rows(5_000, vec![vec![(0, 1.0f64), (4_999, 2.0)]; 1_000]);
        let wb = DenseMatrix::from_vec(1_000, 3, vec![0.1; 3_000]);
        let hb = DenseMatrix::from_vec(3, 5_000, vec![0.2; 15_000]);
        let fast = frobenius_error(&big, &wb, &hb);
        let slow = big.to_dense().frobenius_distance(&wb.matmul(&hb));
        assert!((fast - slow).abs() / slow < 1e-9);
    }

    #[test]
    fn model_file_round_trip() {
        let x = TfidfMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0f32, 0.5], vec![0.0, 0.2]]));
        let model = nmf_fit(&x, &cfg(1, 10)).unwrap();
        let mut buf = Vec::new();
        save_nmf(&model, &mut buf).unwrap();
        let (w, h) = load_nmf::<f32, _>(buf.as_slice()).unwrap();
        assert_eq!(w, model.w);
        assert_eq!(h, model.h);
        buf[0] = b'X';
        assert!(matches!(load_nmf::<f32, _>(buf.as_slice()), Err(TopicsError::BadMagic)));
        assert!(matches!(load_nmf::<f32, _>(&NMF_MAGIC[..5]), Err(TopicsError::Truncated)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn updates_keep_nonnegativity_and_monotone_error(seed in 0u64..1000, u in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dense = DenseMatrix::from_vec(20, 15, (0..300).map(|_| rng.random::<f64>()).collect());
            let x = TfidfMatrix::from_dense(&dense);
            let model = nmf_fit(&x, &NmfConfig { topics: u, max_iters: 60, tol: 0.0, seed }).unwrap();
            for pair in model.errors.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-10);
            }
            prop_assert!(model.w.as_slice().iter().chain(model.h.as_slice()).all(|&v| v >= 0.0));
        }
    }
}
