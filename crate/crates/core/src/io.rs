//! JSON documents for states and theories.
//!
//! Complex entries are `{"re": .., "im": ..}` objects. Parse errors carry the
//! JSON path of the offending field.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{c, ComplexMatrix};
use crate::state::{density_from_bloch, BlochVector, DensityMatrix};
use crate::theory::{TheoryKind, TheorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexEntry {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Row-major `{"re", "im"}` entries of any complex matrix.
pub fn complex_rows(m: &ComplexMatrix) -> Vec<Vec<ComplexEntry>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| ComplexEntry {
                    re: m[(i, j)].re,
                    im: m[(i, j)].im,
                })
                .collect()
        })
        .collect()
}

/// A state as either a Bloch vector or an explicit matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<ComplexEntry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<usize>>,
}

impl StateDocument {
    pub fn from_bloch(r: &BlochVector) -> Self {
        Self {
            bloch: Some(r.as_array()),
            ..Self::default()
        }
    }

    pub fn from_density(rho: &DensityMatrix) -> Self {
        Self {
            bloch: None,
            matrix: Some(complex_rows(rho.matrix())),
            factors: (rho.factors().len() > 1).then(|| rho.factors().to_vec()),
        }
    }

    /// Validates and builds the state. Failures name the violated invariant.
    pub fn to_density(&self) -> Result<DensityMatrix> {
        let rho = match (&self.bloch, &self.matrix) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Document {
                    path: ".".into(),
                    message: "expected exactly one of `bloch` or `matrix`".into(),
                })
            }
            (Some([x, y, z]), None) => density_from_bloch(&BlochVector::new(*x, *y, *z)?)?,
            (None, Some(rows)) => {
                let n = rows.len();
                if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                    return Err(Error::Document {
                        path: format!("matrix[{i}]"),
                        message: format!("row has {} entries, expected {n}", r.len()),
                    });
                }
                let m = ComplexMatrix::from_fn(n, n, |i, j| c(rows[i][j].re, rows[i][j].im));
                DensityMatrix::new(m)?
            }
        };
        match &self.factors {
            Some(f) => rho.with_factor_dims(f.clone()),
            None => Ok(rho),
        }
    }
}

/// `{"kind": "...", "params": {...}}` mirror of [`TheorySpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryDocument {
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

pub const THEORY_KINDS: [&str; 7] = [
    "Coherence",
    "Imaginarity",
    "AsymmetryQubit",
    "ThermalQubit",
    "TotallyOrderedBall",
    "PurityUnital",
    "PPT",
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DimParams {
    #[serde(default = "default_dim")]
    dim: usize,
}

fn default_dim() -> usize {
    2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AsymmetryParams {
    #[serde(default = "default_omega")]
    omega: f64,
}

fn default_omega() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ThermalParams {
    gibbs: Option<[f64; 2]>,
    beta: Option<f64>,
    omega: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BallParams {
    t: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PptParams {
    dims: [usize; 2],
}

fn params<T: DeserializeOwned>(map: &Map<String, Value>) -> Result<T> {
    serde_path_to_error::deserialize(Value::Object(map.clone())).map_err(|e| Error::Document {
        path: format!("params.{}", e.path()).trim_end_matches(".").to_string(),
        message: e.into_inner().to_string(),
    })
}

impl TryFrom<TheoryDocument> for TheorySpec {
    type Error = Error;

    fn try_from(doc: TheoryDocument) -> Result<Self> {
        let p = &doc.params;
        match doc.kind.as_str() {
            "Coherence" => TheorySpec::coherence(params::<DimParams>(p)?.dim),
            "Imaginarity" => TheorySpec::imaginarity(params::<DimParams>(p)?.dim),
            "PurityUnital" => TheorySpec::purity_unital(params::<DimParams>(p)?.dim),
            "AsymmetryQubit" => TheorySpec::asymmetry_qubit(params::<AsymmetryParams>(p)?.omega),
            "ThermalQubit" => match params::<ThermalParams>(p)? {
                ThermalParams {
                    gibbs: Some(g),
                    beta: None,
                    omega: None,
                } => TheorySpec::thermal_qubit(g),
                ThermalParams {
                    gibbs: None,
                    beta: Some(b),
                    omega,
                } => TheorySpec::thermal_qubit_from_temperature(b, omega.unwrap_or(1.0)),
                _ => Err(Error::Document {
                    path: "params".into(),
                    message: "ThermalQubit takes either `gibbs` or `beta` (with optional `omega`)"
                        .into(),
                }),
            },
            "TotallyOrderedBall" => TheorySpec::totally_ordered_ball(params::<BallParams>(p)?.t),
            "PPT" => {
                let [a, b] = params::<PptParams>(p)?.dims;
                TheorySpec::ppt(a, b)
            }
            other => Err(Error::Document {
                path: "kind".into(),
                message: format!("unknown theory kind '{other}', expected one of {THEORY_KINDS:?}"),
            }),
        }
    }
}

impl From<TheorySpec> for TheoryDocument {
    fn from(th: TheorySpec) -> Self {
        let mut params = Map::new();
        match *th.kind() {
            TheoryKind::Coherence | TheoryKind::Imaginarity | TheoryKind::PurityUnital => {
                params.insert("dim".into(), th.dim().into());
            }
            TheoryKind::AsymmetryQubit { omega } => {
                params.insert("omega".into(), omega.into());
            }
            TheoryKind::ThermalQubit { gibbs } => {
                params.insert("gibbs".into(), gibbs.to_vec().into());
            }
            TheoryKind::TotallyOrderedBall { t } => {
                params.insert("t".into(), t.into());
            }
            TheoryKind::Ppt { dims: (a, b) } => {
                params.insert("dims".into(), vec![a, b].into());
            }
        }
        TheoryDocument {
            kind: th.name().to_string(),
            params,
        }
    }
}

/// Deserialises JSON text, reporting the path of the first bad field.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Document {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

pub fn parse_state(text: &str) -> Result<DensityMatrix> {
    from_json::<StateDocument>(text)?.to_density()
}

pub fn parse_theory(text: &str) -> Result<TheorySpec> {
    from_json::<TheoryDocument>(text)?.try_into()
}
