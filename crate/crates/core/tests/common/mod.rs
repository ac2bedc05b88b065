//! Test-side oracles written against the definitions, sharing no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ssl_lab::workbench::{generate_synthetic, instance_rng, SyntheticSpec};
use ssl_lab::{LabeledDataset, LossKind, UnlabeledDataset};

pub const DECREASING: [LossKind; 3] = [LossKind::Logistic, LossKind::Hinge, LossKind::Exponential];

pub fn phi(kind: LossKind, a: f64) -> f64 {
    match kind {
        LossKind::Logistic => (1.0 + (-a).exp()).ln(),
        LossKind::Hinge => (1.0 - a).max(0.0),
        LossKind::Exponential => (-a).exp(),
        LossKind::Quadratic => (1.0 - a) * (1.0 - a),
        LossKind::Absolute => (1.0 - a).abs(),
        LossKind::Custom => unreachable!(),
    }
}

pub fn dphi(kind: LossKind, a: f64) -> f64 {
    match kind {
        LossKind::Logistic => -1.0 / (1.0 + a.exp()),
        LossKind::Exponential => -(-a).exp(),
        LossKind::Quadratic => -2.0 * (1.0 - a),
        _ => panic!("no derivative oracle for piecewise losses"),
    }
}

fn dot(x: &DMatrix<f64>, i: usize, w: &[f64]) -> f64 {
    (0..w.len()).map(|j| x[(i, j)] * w[j]).sum()
}

pub fn oracle_supervised(kind: LossKind, w: &[f64], data: &LabeledDataset, lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..data.len() {
        total += phi(kind, data.y()[i] * dot(data.x(), i, w));
    }
    total + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

pub fn oracle_semi(kind: LossKind, w: &[f64], data: &LabeledDataset, unl: &UnlabeledDataset, q: &[f64], lambda: f64) -> f64 {
    let mut total = oracle_supervised(kind, w, data, lambda);
    for (i, qi) in q.iter().enumerate() {
        let a = dot(unl.x(), i, w);
        total += qi * phi(kind, a) + (1.0 - qi) * phi(kind, -a);
    }
    total
}

pub fn oracle_difference(
    kind: LossKind,
    w: &[f64],
    w_sup: &[f64],
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &[f64],
    lambda: f64,
) -> f64 {
    oracle_semi(kind, w, data, unl, q, lambda) - oracle_semi(kind, w_sup, data, unl, q, lambda)
}

/// Worst-case difference over all hard labelings.
pub fn oracle_enumerate(
    kind: LossKind,
    w: &[f64],
    w_sup: &[f64],
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let u = unl.len();
    let mut best = (f64::NEG_INFINITY, vec![]);
    for mask in 0u32..(1 << u) {
        let q: Vec<f64> = (0..u).map(|i| f64::from((mask >> i) & 1)).collect();
        let v = oracle_difference(kind, w, w_sup, data, unl, &q, lambda);
        if v > best.0 {
            best = (v, q);
        }
    }
    best
}

/// Gradient of the semi-supervised risk for a differentiable loss.
pub fn oracle_semi_grad(kind: LossKind, w: &[f64], data: &LabeledDataset, unl: &UnlabeledDataset, q: &[f64], lambda: f64) -> Vec<f64> {
    let mut g: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
    for i in 0..data.len() {
        let y = data.y()[i];
        let s = y * dphi(kind, y * dot(data.x(), i, w));
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += s * data.x()[(i, j)];
        }
    }
    for (i, qi) in q.iter().enumerate() {
        let a = dot(unl.x(), i, w);
        let s = qi * dphi(kind, a) - (1.0 - qi) * dphi(kind, -a);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += s * unl.x()[(i, j)];
        }
    }
    g
}

/// Ridge least squares on the labeled data plus unlabeled rows with targets `2q - 1`.
pub fn oracle_quadratic_fit(data: &LabeledDataset, unl: Option<(&UnlabeledDataset, &[f64])>, lambda: f64) -> DVector<f64> {
    let d = data.dim();
    let mut g = DMatrix::<f64>::identity(d, d) * lambda;
    let mut rhs = DVector::<f64>::zeros(d);
    let mut add = |x: &DMatrix<f64>, i: usize, t: f64| {
        for j in 0..d {
            rhs[j] += x[(i, j)] * t;
            for k in 0..d {
                g[(j, k)] += x[(i, j)] * x[(i, k)];
            }
        }
    };
    for i in 0..data.len() {
        add(data.x(), i, data.y()[i]);
    }
    if let Some((unl, q)) = unl {
        for (i, qi) in q.iter().enumerate() {
            add(unl.x(), i, 2.0 * qi - 1.0);
        }
    }
    g.lu().solve(&rhs).expect("normal matrix is invertible")
}

pub fn instance(seed: u64, index: usize, d: usize, l: usize, u: usize, mu: f64) -> (LabeledDataset, UnlabeledDataset) {
    let spec = SyntheticSpec::new(d, l, u, mu, 1.0);
    generate_synthetic(&spec, &mut instance_rng(seed, index)).expect("valid spec")
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
