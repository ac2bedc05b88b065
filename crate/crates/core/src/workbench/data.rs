//! Synthetic two-class data and CSV ingestion.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::WorkbenchError;
use crate::risk::{LabeledDataset, UnlabeledDataset};

/// Two Gaussian classes centred at `+mu` and `-mu` with isotropic noise.
///
/// `d` counts the raw features; generated datasets carry one more column,
/// the constant intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub l: usize,
    pub u: usize,
    pub mu: Vec<f64>,
    pub sigma: f64,
    /// Probability of the positive class.
    pub balance: f64,
}

impl SyntheticSpec {
    /// Class means `±mu e_1` and balanced classes.
    pub fn new(d: usize, l: usize, u: usize, mu: f64, sigma: f64) -> Self {
        let mut means = vec![0.0; d];
        if d > 0 {
            means[0] = mu;
        }
        Self {
            d,
            l,
            u,
            mu: means,
            sigma,
            balance: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), WorkbenchError> {
        let bad = |msg: String| Err(WorkbenchError::Spec(msg));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.l < 2 {
            return bad(format!("need at least two labeled objects, got {}", self.l));
        }
        if self.u == 0 {
            return bad("need at least one unlabeled object".into());
        }
        if self.mu.len() != self.d {
            return bad(format!("mean has {} entries for d = {}", self.mu.len(), self.d));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return bad("mean must be finite".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.balance > 0.0 && self.balance < 1.0) {
            return bad(format!("balance must lie in (0, 1), got {}", self.balance));
        }
        Ok(())
    }

    /// Parses `d,L,U,mu,sigma`.
    pub fn parse(s: &str) -> Result<Self, WorkbenchError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let err = || WorkbenchError::Spec(format!("expected d,L,U,mu,sigma, got `{s}`"));
        if parts.len() != 5 {
            return Err(err());
        }
        let int = |p: &str| p.parse::<usize>().map_err(|_| err());
        let real = |p: &str| p.parse::<f64>().map_err(|_| err());
        let spec = Self::new(int(parts[0])?, int(parts[1])?, int(parts[2])?, real(parts[3])?, real(parts[4])?);
        spec.validate()?;
        Ok(spec)
    }

    fn point<R: Rng>(&self, rng: &mut R, label: f64) -> impl Iterator<Item = f64> + '_ {
        let noise: Vec<f64> = (0..self.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        (0..self.d)
            .map(move |j| label * self.mu[j] + self.sigma * noise[j])
            .chain(std::iter::once(1.0))
    }
}

/// Draws labeled and unlabeled samples; both carry the intercept column.
///
/// The labeled set has `round(balance * L)` positives, clamped so that both
/// classes appear, in random order. Unlabeled classes are drawn independently.
pub fn generate_synthetic<R: Rng>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(LabeledDataset, UnlabeledDataset), WorkbenchError> {
    spec.validate()?;
    let n_pos = ((spec.balance * spec.l as f64).round() as usize).clamp(1, spec.l - 1);
    let mut labels: Vec<f64> = (0..spec.l).map(|i| if i < n_pos { 1.0 } else { -1.0 }).collect();
    labels.shuffle(rng);
    let mut rows = Vec::with_capacity(spec.l * (spec.d + 1));
    for &y in &labels {
        rows.extend(spec.point(rng, y));
    }
    let x = DMatrix::from_row_slice(spec.l, spec.d + 1, &rows);
    let mut rows = Vec::with_capacity(spec.u * (spec.d + 1));
    for _ in 0..spec.u {
        let y = if rng.random_bool(spec.balance) { 1.0 } else { -1.0 };
        rows.extend(spec.point(rng, y));
    }
    let xu = DMatrix::from_row_slice(spec.u, spec.d + 1, &rows);
    Ok((LabeledDataset::new(x, DVector::from_vec(labels))?, UnlabeledDataset::new(xu)?))
}

/// Unlabeled sample whose decision values under `w` all exceed `min_abs` in
/// magnitude, drawn from the spec's mixture by rejection.
pub fn sample_outside_margin<R: Rng>(
    spec: &SyntheticSpec,
    w: &DVector<f64>,
    min_abs: f64,
    rng: &mut R,
) -> Result<UnlabeledDataset, WorkbenchError> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.u * (spec.d + 1));
    let mut kept = 0;
    for _ in 0..10_000 * spec.u {
        let y = if rng.random_bool(spec.balance) { 1.0 } else { -1.0 };
        let p: Vec<f64> = spec.point(rng, y).collect();
        let a: f64 = p.iter().zip(w.iter()).map(|(x, w)| x * w).sum();
        if a.abs() > min_abs {
            rows.extend(p);
            kept += 1;
            if kept == spec.u {
                return Ok(UnlabeledDataset::new(DMatrix::from_row_slice(spec.u, spec.d + 1, &rows))?);
            }
        }
    }
    Err(WorkbenchError::Spec(format!(
        "could not draw {} points with |decision value| > {min_abs}",
        spec.u
    )))
}

/// Reads a CSV file with a header and a `label` column.
///
/// Labels `+1`/`1` and `-1` mark labeled rows, `?` unlabeled ones; every
/// other column is a real feature. The intercept column is appended.
pub fn load_csv(path: &Path) -> Result<(LabeledDataset, UnlabeledDataset), WorkbenchError> {
    let file = File::open(path).map_err(|e| WorkbenchError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file)
}

pub(crate) fn read_csv<R: std::io::Read>(input: R) -> Result<(LabeledDataset, UnlabeledDataset), WorkbenchError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| WorkbenchError::Csv { line: 1, msg: e.to_string() })?.clone();
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or(WorkbenchError::Csv {
            line: 1,
            msg: "header has no `label` column".into(),
        })?;
    let d = header.len() - 1;
    if d == 0 {
        return Err(WorkbenchError::Csv {
            line: 1,
            msg: "no feature columns".into(),
        });
    }
    let (mut lab_rows, mut labels, mut unl_rows) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| WorkbenchError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |msg: String| WorkbenchError::Csv { line, msg };
        let mut features = Vec::with_capacity(d + 1);
        for (j, field) in record.iter().enumerate() {
            if j == label_col {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("column `{}`: `{field}` is not a number", &header[j])))?;
            if !v.is_finite() {
                return Err(err(format!("column `{}`: non-finite value", &header[j])));
            }
            features.push(v);
        }
        features.push(1.0);
        match &record[label_col] {
            "+1" | "1" => {
                lab_rows.extend(features);
                labels.push(1.0);
            }
            "-1" => {
                lab_rows.extend(features);
                labels.push(-1.0);
            }
            "?" => unl_rows.extend(features),
            other => return Err(err(format!("label `{other}` is not one of +1, -1, ?"))),
        }
    }
    let l = labels.len();
    let data = LabeledDataset::new(DMatrix::from_row_slice(l, d + 1, &lab_rows), DVector::from_vec(labels))?;
    let unl = if unl_rows.is_empty() {
        UnlabeledDataset::empty(d + 1)
    } else {
        UnlabeledDataset::new(DMatrix::from_row_slice(unl_rows.len() / (d + 1), d + 1, &unl_rows))?
    };
    Ok((data, unl))
}

/// Writes both datasets in the format read by [`load_csv`], dropping the
/// intercept column. Values are written with 17 significant digits.
pub fn write_csv(path: &Path, data: &LabeledDataset, unl: &UnlabeledDataset) -> Result<(), WorkbenchError> {
    let io = |e: std::io::Error| WorkbenchError::Io(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write_rows(&mut out, data, unl).map_err(io)?;
    out.flush().map_err(io)
}

pub(crate) fn write_rows<W: Write>(out: &mut W, data: &LabeledDataset, unl: &UnlabeledDataset) -> std::io::Result<()> {
    let d = data.dim() - 1;
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["label".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    let row = |out: &mut W, x: &[f64], label: &str| -> std::io::Result<()> {
        let mut fields: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
        fields.push(label.to_string());
        writeln!(out, "{}", fields.join(","))
    };
    for i in 0..data.len() {
        let x: Vec<f64> = (0..d).map(|j| data.x()[(i, j)]).collect();
        row(out, &x, if data.y()[i] > 0.0 { "+1" } else { "-1" })?;
    }
    for i in 0..unl.len() {
        let x: Vec<f64> = (0..d).map(|j| unl.x()[(i, j)]).collect();
        row(out, &x, "?")?;
    }
    Ok(())
}
