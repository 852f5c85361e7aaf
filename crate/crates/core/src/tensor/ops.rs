//! Forward kernels. Pure functions over [`Tensor`] values.

use super::{Result, Tensor, TensorError};

const ZERO_NORM: f64 = 1e-12;

fn dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        &[r, c] => Ok((r, c)),
        s => Err(TensorError::ShapeMismatch {
            op,
            left: s.to_vec(),
            right: vec![0, 0],
        }),
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = dims(a, "matmul")?;
    let (k2, m) = dims(b, "matmul")?;
    if k != k2 {
        return Err(mismatch("matmul", a, b));
    }
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = ad[i * k + p];
            for (o, &y) in row.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                *o += x * y;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

/// Elementwise sum. `b` may also be a single row, broadcast over `a`'s rows
/// (bias addition).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, m) = dims(a, "add")?;
    let (bn, bm) = dims(b, "add")?;
    if bm != m || (bn != n && bn != 1) {
        return Err(mismatch("add", a, b));
    }
    let data = if bn == n {
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
    } else {
        a.data()
            .chunks(m.max(1))
            .flat_map(|r| r.iter().zip(b.data()).map(|(x, y)| x + y))
            .collect()
    };
    Tensor::matrix(n, m, data)
}

fn zip_same(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a, b));
    }
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same(a, b, "mul", |x, y| x * y)
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same(a, b, "div", |x, y| x / y)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
        .expect("map preserves shape")
}

pub fn scale(a: &Tensor, s: f64) -> Tensor {
    map(a, |x| x * s)
}

pub fn relu(a: &Tensor) -> Tensor {
    map(a, |x| if x > 0.0 { x } else { 0.0 })
}

pub fn exp(a: &Tensor) -> Tensor {
    map(a, f64::exp)
}

pub fn log(a: &Tensor) -> Tensor {
    map(a, f64::ln)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (n, m) = dims(a, "transpose")?;
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.data()[i * m + j];
        }
    }
    Tensor::matrix(m, n, out)
}

/// `[a | b]` along the last axis.
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, ma) = dims(a, "concat")?;
    let (nb, mb) = dims(b, "concat")?;
    if n != nb {
        return Err(mismatch("concat", a, b));
    }
    let mut out = Vec::with_capacity(n * (ma + mb));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * ma..(i + 1) * ma]);
        out.extend_from_slice(&b.data()[i * mb..(i + 1) * mb]);
    }
    Tensor::matrix(n, ma + mb, out)
}

/// Output row `i` is input row `index[i]`.
pub fn gather_rows(a: &Tensor, index: &[usize]) -> Result<Tensor> {
    let (n, m) = dims(a, "gather")?;
    let mut out = Vec::with_capacity(index.len() * m);
    for &r in index {
        if r >= n {
            return Err(TensorError::IndexOutOfRange { index: r, rows: n });
        }
        out.extend_from_slice(&a.data()[r * m..(r + 1) * m]);
    }
    Tensor::matrix(index.len(), m, out)
}

/// Output row `index[i]` accumulates input row `i`; `out_rows` rows total.
pub fn scatter_add_rows(a: &Tensor, index: &[usize], out_rows: usize) -> Result<Tensor> {
    let (n, m) = dims(a, "scatter_add")?;
    if index.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "scatter_add",
            left: a.shape().to_vec(),
            right: vec![index.len()],
        });
    }
    let mut out = vec![0.0; out_rows * m];
    for (i, &r) in index.iter().enumerate() {
        if r >= out_rows {
            return Err(TensorError::IndexOutOfRange {
                index: r,
                rows: out_rows,
            });
        }
        for (o, &x) in out[r * m..(r + 1) * m]
            .iter_mut()
            .zip(&a.data()[i * m..(i + 1) * m])
        {
            *o += x;
        }
    }
    Tensor::matrix(out_rows, m, out)
}

/// Per-row sum, `n×m → n×1`.
pub fn row_sum(a: &Tensor) -> Result<Tensor> {
    let (n, m) = dims(a, "row_sum")?;
    let data = (0..n)
        .map(|i| a.data()[i * m..(i + 1) * m].iter().fold(0.0, |s, &x| s + x))
        .collect();
    Tensor::matrix(n, 1, data)
}

/// Per-row mean, `n×m → n×1`.
pub fn row_mean(a: &Tensor) -> Result<Tensor> {
    let m = dims(a, "row_mean")?.1;
    Ok(scale(&row_sum(a)?, 1.0 / m as f64))
}

/// Euclidean row norms.
pub fn row_norms(a: &Tensor) -> Result<Vec<f64>> {
    let (n, m) = dims(a, "l2_normalize")?;
    Ok((0..n)
        .map(|i| {
            a.data()[i * m..(i + 1) * m]
                .iter()
                .fold(0.0, |s, &x| s + x * x)
                .sqrt()
        })
        .collect())
}

/// Scales each row to unit norm; a row with norm below `1e-12` is an error.
pub fn l2_normalize_rows(a: &Tensor) -> Result<Tensor> {
    let norms = row_norms(a)?;
    let m = a.cols();
    let mut out = a.clone();
    for (i, &norm) in norms.iter().enumerate() {
        if norm < ZERO_NORM {
            return Err(TensorError::ZeroNormRow { row: i, norm });
        }
        for x in &mut out.data_mut()[i * m..(i + 1) * m] {
            *x /= norm;
        }
    }
    Ok(out)
}

/// Pairwise cosine similarities between the rows of `a` (`n×d`) and `b` (`m×d`).
pub fn cosine_sim(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if dims(a, "cosine_sim")?.1 != dims(b, "cosine_sim")?.1 {
        return Err(mismatch("cosine_sim", a, b));
    }
    matmul(&l2_normalize_rows(a)?, &transpose(&l2_normalize_rows(b)?)?)
}
