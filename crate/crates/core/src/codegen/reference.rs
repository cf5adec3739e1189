//! Dense reference evaluation of kernel statements, used as the numerical
//! oracle for generated code.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frontend::{DataId, DeclaredType, Expr, KernelGraph, KernelSpec, Storage};

/// A logical `rows x cols` value in row-major order. Column vectors are
/// `n x 1`, row vectors `1 x n`, scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(data: Vec<f64>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for k in 0..n {
            t.data[k * n + k] = 1.0;
        }
        t
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn transpose(&self) -> Tensor {
        let mut t = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("extent mismatch: {0}")]
    ExtentMismatch(String),
}

fn fits(ty: DeclaredType, t: &Tensor) -> bool {
    match ty {
        DeclaredType::Scalar => t.is_scalar(),
        DeclaredType::Vector(crate::frontend::Orientation::Column) => t.cols == 1,
        DeclaredType::Vector(crate::frontend::Orientation::Row) => t.rows == 1,
        DeclaredType::Matrix(_) => true,
    }
}

fn eval(expr: &Expr, env: &HashMap<String, Tensor>) -> Result<Tensor, EvalError> {
    Ok(match expr {
        Expr::Var(n) => env[n].clone(),
        Expr::Transpose(e) => eval(e, env)?.transpose(),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            if (x.rows, x.cols) != (y.rows, y.cols) {
                return Err(EvalError::ExtentMismatch(format!(
                    "{}x{} and {}x{} in `{expr}`",
                    x.rows, x.cols, y.rows, y.cols
                )));
            }
            let sign = if matches!(expr, Expr::Add(..)) { 1.0 } else { -1.0 };
            Tensor {
                rows: x.rows,
                cols: x.cols,
                data: x.data.iter().zip(&y.data).map(|(p, q)| p + sign * q).collect(),
            }
        }
        Expr::Mul(a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            if x.is_scalar() || y.is_scalar() {
                let (s, t) = if x.is_scalar() { (x.data[0], y) } else { (y.data[0], x) };
                Tensor { rows: t.rows, cols: t.cols, data: t.data.iter().map(|v| v * s).collect() }
            } else {
                if x.cols != y.rows {
                    return Err(EvalError::ExtentMismatch(format!(
                        "{}x{} times {}x{} in `{expr}`",
                        x.rows, x.cols, y.rows, y.cols
                    )));
                }
                let mut t = Tensor::zeros(x.rows, y.cols);
                for r in 0..x.rows {
                    for c in 0..y.cols {
                        t.data[r * y.cols + c] = (0..x.cols).map(|k| x.get(r, k) * y.get(k, c)).sum();
                    }
                }
                t
            }
        }
    })
}

/// Interprets the statements in order on dense values. Returns the outputs in
/// declaration order.
pub fn reference_evaluate(spec: &KernelSpec, inputs: &HashMap<String, Tensor>) -> Result<Vec<Tensor>, EvalError> {
    let mut env = HashMap::new();
    for d in &spec.inputs {
        let t = inputs.get(&d.name).ok_or_else(|| EvalError::MissingInput(d.name.clone()))?;
        if !fits(d.ty, t) {
            return Err(EvalError::ExtentMismatch(format!("`{}` is {}x{}, declared {}", d.name, t.rows, t.cols, d.ty)));
        }
        env.insert(d.name.clone(), t.clone());
    }
    for s in &spec.statements {
        let v = eval(&s.expr, &env)?;
        env.insert(s.target.clone(), v);
    }
    spec.outputs
        .iter()
        .map(|d| {
            let t = env.remove(&d.name).expect("outputs are assigned");
            if fits(d.ty, &t) {
                Ok(t)
            } else {
                Err(EvalError::ExtentMismatch(format!("`{}` came out {}x{}", d.name, t.rows, t.cols)))
            }
        })
        .collect()
}

/// Logical shape of a data node under concrete extents.
pub fn logical_shape(graph: &KernelGraph, data: DataId, extents: &[usize]) -> (usize, usize) {
    let (r, c) = graph.shapes[data.0];
    (r.map_or(1, |d| extents[d.0]), c.map_or(1, |d| extents[d.0]))
}

/// Flattens a logical value into the node's storage layout.
pub fn to_storage(graph: &KernelGraph, data: DataId, t: &Tensor) -> Vec<f64> {
    match (graph.shapes[data.0], graph.storage[data.0]) {
        ((Some(_), Some(_)), Storage::ColumnMajor) => t.transpose().data,
        _ => t.data.clone(),
    }
}

pub fn from_storage(graph: &KernelGraph, data: DataId, extents: &[usize], flat: &[f64]) -> Tensor {
    let (rows, cols) = logical_shape(graph, data, extents);
    match (graph.shapes[data.0], graph.storage[data.0]) {
        ((Some(_), Some(_)), Storage::ColumnMajor) => Tensor { rows: cols, cols: rows, data: flat.to_vec() }.transpose(),
        _ => Tensor { rows, cols, data: flat.to_vec() },
    }
}

/// Uniform random inputs in `[-1, 1)`, keyed by name.
pub fn random_inputs(graph: &KernelGraph, extents: &[usize], seed: u64) -> HashMap<String, Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graph
        .flow
        .spec
        .inputs
        .iter()
        .map(|d| {
            let id = graph.flow.data_by_name(&d.name).expect("declared");
            let (rows, cols) = logical_shape(graph, id, extents);
            let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (d.name.clone(), Tensor { rows, cols, data })
        })
        .collect()
}

/// Norm-wise relative error `max|got - want| / max|want|`, falling back to
/// the absolute error when `want` is all zeros.
pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    if got.len() != want.len() {
        return f64::INFINITY;
    }
    let diff = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff.is_nan() {
        f64::INFINITY
    } else if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Extents with every dimension set to `n`.
pub fn uniform_extents(graph: &KernelGraph, n: usize) -> Vec<usize> {
    vec![n; graph.dims.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn batax_identity() {
        let g = corpus::load("batax").unwrap();
        let inputs = HashMap::from([
            ("A".to_string(), Tensor::identity(3)),
            ("x".to_string(), Tensor::column(vec![1.0, 2.0, 3.0])),
            ("beta".to_string(), Tensor::scalar(2.0)),
        ]);
        let out = reference_evaluate(&g.flow.spec, &inputs).unwrap();
        assert_eq!(out, vec![Tensor::column(vec![2.0, 4.0, 6.0])]);
    }

    #[test]
    fn dgemv_degenerate_scalars() {
        let g = corpus::load("dgemv").unwrap();
        let mut inputs = random_inputs(&g, &[4, 3], 9);
        inputs.insert("alpha".into(), Tensor::scalar(0.0));
        inputs.insert("beta".into(), Tensor::scalar(1.0));
        let out = reference_evaluate(&g.flow.spec, &inputs).unwrap();
        assert_eq!(out[0], inputs["y"]);
    }

    #[test]
    fn extent_mismatch() {
        let g = corpus::load("batax").unwrap();
        let inputs = HashMap::from([
            ("A".to_string(), Tensor::identity(3)),
            ("x".to_string(), Tensor::column(vec![1.0, 2.0])),
            ("beta".to_string(), Tensor::scalar(2.0)),
        ]);
        assert!(matches!(reference_evaluate(&g.flow.spec, &inputs), Err(EvalError::ExtentMismatch(_))));
    }

    #[test]
    fn storage_round_trip() {
        let g = crate::frontend::compile_kernel(
            "K in: A : matrix(column), x : vector(column) out: y : vector(column) { y = A * x }",
        )
        .unwrap();
        let a = g.flow.data_by_name("A").unwrap();
        let t = Tensor { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        let flat = to_storage(&g, a, &t);
        assert_eq!(flat, [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(from_storage(&g, a, &[2, 3], &flat), t);
    }
}
