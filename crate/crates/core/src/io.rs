//! JSON formats for models and reduction certificates.
//!
//! Matrices are row-major lists of rows, each entry an `[re, im]` pair.
//! Superoperators are stored as Kraus lists; a map known only through its
//! transfer matrix gets a Kraus set derived from its Choi matrix. Writing a
//! parsed file again reproduces it byte for byte.

use crate::channels::Superoperator;
use crate::config::Config;
use crate::error::{QhmError, Result};
use crate::linalg::{cplx, CMatrix, Operator};
use crate::model::QhmModel;
use crate::reduction::{ReductionCertificate, ReductionStep, StepDiagnostics, StepKind};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1";

/// Relative cutoff on Choi eigenvalues when deriving Kraus operators for
/// serialization.
const KRAUS_CUTOFF: f64 = 1e-13;

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json<T: Real>(m: &CMatrix<T>) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re.as_f64(), m[(i, j)].im.as_f64()]).collect())
        .collect()
}

pub fn matrix_from_json<T: Real>(rows: &MatrixJson, what: &str) -> Result<CMatrix<T>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(QhmError::Parse(format!("{what}: empty matrix")));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(QhmError::Parse(format!("{what}: ragged rows")));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| {
        cplx(T::lit(rows[i][j][0]), T::lit(rows[i][j][1]))
    }))
}

fn square_from_json<T: Real>(rows: &MatrixJson, n: usize, what: &str) -> Result<Operator<T>> {
    let m = matrix_from_json(rows, what)?;
    if m.shape() != (n, n) {
        return Err(QhmError::Parse(format!(
            "{what}: expected {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Operator::from(m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapJson {
    Kraus(Vec<MatrixJson>),
    Transfer(MatrixJson),
}

/// Kraus operators for serialization, derived from the Choi matrix when the
/// map carries none.
fn kraus_for_output<T: Real>(map: &Superoperator<T>) -> Result<Vec<CMatrix<T>>> {
    match map.kraus() {
        Some(k) => Ok(k.to_vec()),
        None => map.kraus_from_choi(T::lit(KRAUS_CUTOFF)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    pub dim: usize,
    pub map: MapJson,
    pub output_ops: Vec<MatrixJson>,
    pub initial_states: Vec<MatrixJson>,
    pub label: String,
    pub metadata: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
}

impl ModelFile {
    pub fn from_model<T: Real>(m: &QhmModel<T>) -> Result<Self> {
        let kraus = kraus_for_output(m.map())?;
        let blocks = (m.blocks() != [m.dim()]).then(|| m.blocks().to_vec());
        Ok(Self {
            schema_version: SCHEMA_VERSION.into(),
            dim: m.dim(),
            map: MapJson::Kraus(kraus.iter().map(matrix_to_json).collect()),
            output_ops: m.output_ops().iter().map(|c| matrix_to_json(c.matrix())).collect(),
            initial_states: m.initial_states().iter().map(|s| matrix_to_json(s.matrix())).collect(),
            label: m.label.clone(),
            metadata: m.metadata.clone(),
            blocks,
        })
    }

    /// Builds the model, checking shapes, CPTP dynamics and density states.
    pub fn to_model<T: Real>(&self, tol: T) -> Result<QhmModel<T>> {
        let m = self.to_model_unchecked()?;
        m.validate(tol)?;
        Ok(m)
    }

    /// Builds the model checking shapes only.
    pub fn to_model_unchecked<T: Real>(&self) -> Result<QhmModel<T>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(QhmError::Parse(format!(
                "unsupported schema_version {:?}",
                self.schema_version
            )));
        }
        let n = self.dim;
        if n == 0 {
            return Err(QhmError::Parse("dim must be positive".into()));
        }
        let map = match &self.map {
            MapJson::Kraus(ops) => {
                let ks = ops
                    .iter()
                    .map(|k| {
                        let k = matrix_from_json(k, "Kraus operator")?;
                        if k.shape() != (n, n) {
                            return Err(QhmError::Parse(format!("Kraus operator must be {n}x{n}")));
                        }
                        Ok(k)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Superoperator::from_kraus(ks).map_err(|e| QhmError::Parse(e.to_string()))?
            }
            MapJson::Transfer(t) => {
                let t = matrix_from_json(t, "transfer matrix")?;
                Superoperator::from_transfer(n, n, t).map_err(|e| QhmError::Parse(e.to_string()))?
            }
        };
        let outs = self
            .output_ops
            .iter()
            .map(|c| square_from_json(c, n, "output operator"))
            .collect::<Result<Vec<_>>>()?;
        let states = self
            .initial_states
            .iter()
            .map(|s| square_from_json(s, n, "initial state"))
            .collect::<Result<Vec<_>>>()?;
        let blocks = self.blocks.clone().unwrap_or_else(|| vec![n]);
        QhmModel::from_parts(map, outs, states, blocks, self.label.clone())
            .map(|m| m.with_metadata(self.metadata.clone()))
            .map_err(|e| QhmError::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperoperatorJson {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kraus: Vec<MatrixJson>,
}

impl SuperoperatorJson {
    pub fn from_map<T: Real>(map: &Superoperator<T>) -> Result<Self> {
        Ok(Self {
            in_dim: map.in_dim(),
            out_dim: map.out_dim(),
            kraus: kraus_for_output(map)?.iter().map(matrix_to_json).collect(),
        })
    }

    pub fn to_map<T: Real>(&self) -> Result<Superoperator<T>> {
        let ks = self
            .kraus
            .iter()
            .map(|k| {
                let k = matrix_from_json::<T>(k, "Kraus operator")?;
                if k.shape() != (self.out_dim, self.in_dim) {
                    return Err(QhmError::Parse(format!(
                        "Kraus operator must be {}x{}",
                        self.out_dim, self.in_dim
                    )));
                }
                Ok(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Superoperator::from_kraus(ks).map_err(|e| QhmError::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepJson {
    pub kind: StepKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub r: SuperoperatorJson,
    pub j: SuperoperatorJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<MatrixJson>,
    pub diagnostics: StepDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema_version: String,
    pub tol: f64,
    pub seed: u64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub eff_dim: usize,
    pub iterations: usize,
    pub converged: bool,
    pub verified_horizon: usize,
    pub max_output_deviation: f64,
    pub projection_residual: f64,
    pub steps: Vec<StepJson>,
    pub r_star: SuperoperatorJson,
    pub j_star: SuperoperatorJson,
    pub reduced: ModelFile,
}

impl CertificateFile {
    pub fn from_certificate<T: Real>(c: &ReductionCertificate<T>, cfg: &Config<T>) -> Result<Self> {
        let steps = c
            .steps
            .iter()
            .map(|s| {
                Ok(StepJson {
                    kind: s.kind,
                    input_dim: s.input_dim,
                    output_dim: s.output_dim,
                    r: SuperoperatorJson::from_map(&s.r)?,
                    j: SuperoperatorJson::from_map(&s.j)?,
                    sigma: s.sigma.as_ref().map(|x| matrix_to_json(x.matrix())),
                    diagnostics: s.diagnostics.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION.into(),
            tol: cfg.tol.as_f64(),
            seed: cfg.seed,
            input_dim: c.input_dim(),
            output_dim: c.output_dim(),
            eff_dim: c.eff_dim,
            iterations: c.iterations,
            converged: c.converged,
            verified_horizon: c.verified_horizon,
            max_output_deviation: c.max_output_deviation,
            projection_residual: c.projection_residual,
            steps,
            r_star: SuperoperatorJson::from_map(&c.r_star)?,
            j_star: SuperoperatorJson::from_map(&c.j_star)?,
            reduced: ModelFile::from_model(&c.reduced)?,
        })
    }

    pub fn to_certificate<T: Real>(&self) -> Result<ReductionCertificate<T>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(QhmError::Parse(format!(
                "unsupported schema_version {:?}",
                self.schema_version
            )));
        }
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let sigma = match &s.sigma {
                    Some(m) => Some(Operator::from(matrix_from_json(m, "sigma")?)),
                    None => None,
                };
                Ok(ReductionStep {
                    kind: s.kind,
                    input_dim: s.input_dim,
                    output_dim: s.output_dim,
                    r: s.r.to_map()?,
                    j: s.j.to_map()?,
                    sigma,
                    diagnostics: s.diagnostics.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReductionCertificate {
            steps,
            r_star: self.r_star.to_map()?,
            j_star: self.j_star.to_map()?,
            reduced: self.reduced.to_model_unchecked()?,
            verified_horizon: self.verified_horizon,
            max_output_deviation: self.max_output_deviation,
            eff_dim: self.eff_dim,
            converged: self.converged,
            iterations: self.iterations,
            projection_residual: self.projection_residual,
        })
    }
}

/// Pretty JSON with every innermost list (a matrix row or an `[re, im]`
/// pair) kept on one line.
pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

fn is_flat(v: &serde_json::Value) -> bool {
    use serde_json::Value;
    match v {
        Value::Array(items) => items.iter().all(|x| match x {
            Value::Array(inner) => inner.iter().all(|y| !y.is_array() && !y.is_object()),
            Value::Object(_) => false,
            _ => true,
        }),
        _ => false,
    }
}

fn write_value(v: &serde_json::Value, indent: usize, out: &mut String) -> Result<()> {
    use serde_json::Value;
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Array(items) if !items.is_empty() && !is_flat(v) => {
            out.push_str("[\n");
            for (k, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out)?;
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (k, (key, x)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(key)?);
                out.push_str(": ");
                write_value(x, indent + 1, out)?;
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        _ => out.push_str(&serde_json::to_string(v)?),
    }
    Ok(())
}

pub fn from_json<S: for<'de> Deserialize<'de>>(text: &str) -> Result<S> {
    serde_json::from_str(text).map_err(|e| QhmError::Parse(e.to_string()))
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    from_json(&std::fs::read_to_string(path)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path, tol: T) -> Result<QhmModel<T>> {
    read_json::<ModelFile>(path)?.to_model(tol)
}

pub fn save_model<T: Real>(path: &Path, m: &QhmModel<T>) -> Result<()> {
    write_json(path, &ModelFile::from_model(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{appendix, grover};
    use crate::reduction::reduce_iterative;

    #[test]
    fn model_roundtrip_is_byte_identical() {
        let m = grover::<f64>(8, 1).unwrap();
        let text = to_json(&ModelFile::from_model(&m).unwrap()).unwrap();
        let back: QhmModel<f64> = from_json::<ModelFile>(&text).unwrap().to_model(1e-9).unwrap();
        assert!(back.map().distance(m.map()).unwrap() == 0.0);
        let again = to_json(&ModelFile::from_model(&back).unwrap()).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn row_major_layout() {
        let m = CMatrix::<f64>::from_fn(2, 3, |i, j| cplx((10 * i + j) as f64, -1.0));
        let j = matrix_to_json(&m);
        assert_eq!(j[1][2], [12.0, -1.0]);
        assert_eq!(matrix_from_json::<f64>(&j, "m").unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        let mut f = ModelFile::from_model(&appendix::<f64>()).unwrap();
        f.initial_states[0].pop();
        assert!(matches!(f.to_model::<f64>(1e-9), Err(QhmError::Parse(_))));
        let mut f = ModelFile::from_model(&appendix::<f64>()).unwrap();
        f.schema_version = "2".into();
        assert!(matches!(f.to_model::<f64>(1e-9), Err(QhmError::Parse(_))));
        assert!(from_json::<ModelFile>("{").is_err());
    }

    #[test]
    fn non_cptp_map_is_rejected() {
        let mut f = ModelFile::from_model(&appendix::<f64>()).unwrap();
        if let MapJson::Kraus(k) = &mut f.map {
            k[0][0][0][0] *= 1.5;
        }
        assert!(matches!(f.to_model::<f64>(1e-9), Err(QhmError::NotCptp { .. })));
    }

    #[test]
    fn transfer_form_loads() {
        let m = appendix::<f64>();
        let mut f = ModelFile::from_model(&m).unwrap();
        f.map = MapJson::Transfer(matrix_to_json(m.map().transfer()));
        let back: QhmModel<f64> = f.to_model(1e-9).unwrap();
        assert!(back.map().distance(m.map()).unwrap() < 1e-15);
    }

    #[test]
    fn certificate_roundtrip_is_byte_identical() {
        let cfg = Config::default();
        let m = appendix::<f64>();
        let cert = reduce_iterative(&m, &cfg).unwrap();
        let text = to_json(&CertificateFile::from_certificate(&cert, &cfg).unwrap()).unwrap();
        let back: ReductionCertificate<f64> = from_json::<CertificateFile>(&text).unwrap().to_certificate().unwrap();
        let again = to_json(&CertificateFile::from_certificate(&back, &cfg).unwrap()).unwrap();
        assert_eq!(text, again);
        assert_eq!(back.output_dim(), 2);
    }
}
