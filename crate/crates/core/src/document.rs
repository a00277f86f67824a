//! JSON wire formats: algebra documents, symmetric matrix files and certificates.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::algebra::StructureTensor;
use crate::certificate::{Certificate, SolitonCertificate};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stability::{ObstructionCertificate, ObstructionKind};

const KNOWN_FIELDS: [&str; 4] = ["dim", "brackets", "name", "metadata"];
pub const CERTIFICATE_FORMAT: &str = "nilsoliton-certificate/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRecord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub c: f64,
}

/// `{"dim", "brackets": [{"i","j","k","c"}], "name"?, "metadata"?}` with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraDocument {
    pub dim: usize,
    pub brackets: Vec<BracketRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub metadata: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAlgebra {
    pub document: AlgebraDocument,
    /// One entry per ignored top-level field.
    pub warnings: Vec<String>,
}

/// Line numbers of top-level keys and of the records of the `brackets` array.
#[derive(Debug, Default)]
struct Locations {
    keys: Vec<(String, usize)>,
    records: Vec<usize>,
}

impl Locations {
    fn key(&self, name: &str) -> usize {
        self.keys.iter().find(|(k, _)| k == name).map_or(1, |(_, l)| *l)
    }

    fn record(&self, r: usize) -> usize {
        self.records.get(r).copied().unwrap_or_else(|| self.key("brackets"))
    }
}

/// Walks syntactically valid JSON and records where things start.
fn locate(text: &str) -> Locations {
    let mut loc = Locations::default();
    let mut line = 1;
    let mut depth = 0usize;
    let mut in_brackets = false;
    let mut chars = text.chars().peekable();
    let mut last_string: Option<(String, usize)> = None;
    while let Some(ch) = chars.next() {
        match ch {
            '\n' => line += 1,
            '"' => {
                let start = line;
                let mut s = String::new();
                while let Some(c) = chars.next() {
                    match c {
                        '\\' => {
                            if let Some(e) = chars.next() {
                                s.push(e);
                            }
                        }
                        '"' => break,
                        '\n' => {
                            line += 1;
                            s.push(c);
                        }
                        _ => s.push(c),
                    }
                }
                last_string = Some((s, start));
                continue;
            }
            ':' => {
                if depth == 1 {
                    if let Some((key, l)) = last_string.take() {
                        in_brackets = key == "brackets";
                        loc.keys.push((key, l));
                    }
                }
            }
            '{' | '[' => {
                if ch == '{' && depth == 2 && in_brackets {
                    loc.records.push(line);
                }
                depth += 1;
            }
            '}' | ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if !ch.is_whitespace() {
            last_string = None;
        }
    }
    loc
}

fn parse_error(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ParseError { line, field: field.into(), message: message.into() }
}

fn as_index(v: &Value, line: usize, field: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| parse_error(line, field, "expected a non-negative integer"))
}

pub fn parse_algebra(text: &str) -> Result<ParsedAlgebra> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_error(e.line(), "", e.to_string()))?;
    let loc = locate(text);
    let Value::Object(obj) = root else {
        return Err(parse_error(1, "", "expected a JSON object"));
    };
    let mut warnings = Vec::new();
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            warnings.push(format!("line {}: unknown field `{key}` ignored", loc.key(key)));
        }
    }
    let dim_value = obj.get("dim").ok_or_else(|| parse_error(1, "dim", "missing field"))?;
    let dim = as_index(dim_value, loc.key("dim"), "dim")?;
    if dim == 0 {
        return Err(parse_error(loc.key("dim"), "dim", "must be positive"));
    }
    let list = obj
        .get("brackets")
        .ok_or_else(|| parse_error(1, "brackets", "missing field"))?
        .as_array()
        .ok_or_else(|| parse_error(loc.key("brackets"), "brackets", "expected an array"))?;
    let name = match obj.get("name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(parse_error(loc.key("name"), "name", "expected a string")),
    };
    let metadata = match obj.get("metadata") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(parse_error(loc.key("metadata"), "metadata", "expected an object")),
    };

    let mut brackets = Vec::with_capacity(list.len());
    let mut seen = std::collections::BTreeSet::new();
    for (r, item) in list.iter().enumerate() {
        let line = loc.record(r);
        let field = |f: &str| format!("brackets[{r}].{f}");
        let rec = item.as_object().ok_or_else(|| parse_error(line, format!("brackets[{r}]"), "expected an object"))?;
        for key in rec.keys() {
            if !["i", "j", "k", "c"].contains(&key.as_str()) {
                return Err(parse_error(line, field(key), "unknown field in bracket record"));
            }
        }
        let get = |f: &str| rec.get(f).ok_or_else(|| parse_error(line, field(f), "missing field"));
        let i = as_index(get("i")?, line, &field("i"))?;
        let j = as_index(get("j")?, line, &field("j"))?;
        let k = as_index(get("k")?, line, &field("k"))?;
        let c = get("c")?.as_f64().filter(|c| c.is_finite()).ok_or_else(|| parse_error(line, field("c"), "expected a finite number"))?;
        if [i, j, k].iter().any(|&x| x == 0 || x > dim) {
            return Err(Error::IndexOutOfRange { record: r, i, j, k, dim });
        }
        if i >= j {
            return Err(parse_error(line, field("j"), format!("requires i < j, found i = {i}, j = {j}")));
        }
        if !seen.insert((i, j, k)) {
            return Err(Error::DuplicateTriple { i, j, k });
        }
        brackets.push(BracketRecord { i, j, k, c });
    }
    Ok(ParsedAlgebra { document: AlgebraDocument { dim, brackets, name, metadata }, warnings })
}

impl AlgebraDocument {
    pub fn from_tensor(name: Option<&str>, mu: &StructureTensor) -> Self {
        AlgebraDocument {
            dim: mu.dim(),
            brackets: mu.triples().map(|(i, j, k, c)| BracketRecord { i: i + 1, j: j + 1, k: k + 1, c }).collect(),
            name: name.map(str::to_owned),
            metadata: Map::new(),
        }
    }

    pub fn to_tensor(&self) -> Result<StructureTensor> {
        let triples: Vec<_> = self.brackets.iter().map(|b| (b.i - 1, b.j - 1, b.k - 1, b.c)).collect();
        StructureTensor::from_triples(self.dim, &triples)
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialise")
    }

    /// SHA-256 of the canonical compact rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("documents serialise")))
    }
}

pub fn corpus_document(name: &str) -> Result<AlgebraDocument> {
    let mu = crate::corpus::by_name(name).ok_or_else(|| Error::UnknownName(name.to_owned()))?;
    Ok(AlgebraDocument::from_tensor(Some(name), &mu))
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::MalformedCertificate { reason: format!("{what} must be {n}x{n}") });
    }
    Ok(Mat::from_fn(n, n, |r, c| rows[r][c]))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

/// `{"dim": n, "rows": [[...], ...]}`, required to be symmetric.
pub fn parse_symmetric_matrix(text: &str) -> Result<Mat> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| parse_error(e.line(), "", e.to_string()))?;
    let n = file.dim;
    if file.rows.len() != n {
        return Err(parse_error(1, "rows", format!("expected {n} rows, found {}", file.rows.len())));
    }
    if let Some(r) = file.rows.iter().position(|r| r.len() != n) {
        return Err(parse_error(1, format!("rows[{r}]"), format!("expected {n} entries")));
    }
    let m = Mat::from_fn(n, n, |r, c| file.rows[r][c]);
    let defect = (&m - m.transpose()).amax();
    if defect > 1e-12 * m.amax().max(1.0) {
        return Err(Error::AsymmetricInput { defect });
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolitonBlock {
    pub a: Vec<Vec<f64>>,
    pub c: f64,
    pub d: Vec<Vec<f64>>,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionBlock {
    pub lambda: Vec<Vec<f64>>,
    pub nu: f64,
    pub frame: Vec<Vec<f64>>,
    pub witness: [usize; 3],
    #[serde(default)]
    pub scaling_constant: Option<f64>,
}

/// Self-contained certificate: the working-frame bracket, the diagonal of `phi` there, and the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub format: String,
    pub kind: String,
    pub dim: usize,
    pub brackets: Vec<BracketRecord>,
    pub phi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soliton: Option<SolitonBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstruction: Option<ObstructionBlock>,
}

impl CertificateFile {
    pub fn new(cert: &Certificate, bracket: &StructureTensor, phi: &[f64]) -> Self {
        let doc = AlgebraDocument::from_tensor(None, bracket);
        let (kind, soliton, obstruction) = match cert {
            Certificate::Soliton(s) => (
                "soliton".to_owned(),
                Some(SolitonBlock { a: rows(&s.a), c: s.c, d: rows(&s.d), residual: s.residual, energy: s.energy }),
                None,
            ),
            Certificate::Obstruction(o) => (
                o.kind.as_str().to_owned(),
                None,
                Some(ObstructionBlock {
                    lambda: rows(&o.lambda),
                    nu: o.nu,
                    frame: rows(&o.frame),
                    witness: [o.witness.0, o.witness.1, o.witness.2],
                    scaling_constant: o.scaling_constant,
                }),
            ),
        };
        CertificateFile {
            format: CERTIFICATE_FORMAT.into(),
            kind,
            dim: doc.dim,
            brackets: doc.brackets,
            phi: phi.to_vec(),
            soliton,
            obstruction,
        }
    }

    /// Accepts a certificate file or a run report carrying one under `certificate`.
    pub fn parse(text: &str) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedCertificate { reason };
        let mut value: Value = serde_json::from_str(text).map_err(|e| parse_error(e.line(), "", e.to_string()))?;
        if let Some(inner) = value.get_mut("certificate").map(Value::take) {
            if inner.is_null() {
                return Err(malformed("report carries no certificate".into()));
            }
            value = inner;
        }
        let file: CertificateFile = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        if file.format != CERTIFICATE_FORMAT {
            return Err(malformed(format!("unsupported format `{}`", file.format)));
        }
        if file.phi.len() != file.dim {
            return Err(malformed("phi length differs from dim".into()));
        }
        Ok(file)
    }

    pub fn bracket(&self) -> Result<StructureTensor> {
        let doc = AlgebraDocument { dim: self.dim, brackets: self.brackets.clone(), name: None, metadata: Map::new() };
        let text = serde_json::to_string(&doc).expect("documents serialise");
        parse_algebra(&text)?.document.to_tensor()
    }

    pub fn certificate(&self) -> Result<Certificate> {
        let n = self.dim;
        let malformed = |reason: &str| Error::MalformedCertificate { reason: reason.into() };
        match (self.kind.as_str(), &self.soliton, &self.obstruction) {
            ("soliton", Some(s), None) => Ok(Certificate::Soliton(SolitonCertificate {
                a: from_rows(&s.a, n, "a")?,
                c: s.c,
                d: from_rows(&s.d, n, "d")?,
                residual: s.residual,
                energy: s.energy,
            })),
            (kind, None, Some(o)) => {
                let kind = match kind {
                    "negative-weight" => ObstructionKind::NegativeWeight,
                    "scaling" => ObstructionKind::Scaling,
                    "zero-phi" => ObstructionKind::ZeroPhi,
                    _ => return Err(malformed("unknown certificate kind")),
                };
                let [i, j, k] = o.witness;
                Ok(Certificate::Obstruction(ObstructionCertificate {
                    kind,
                    lambda: from_rows(&o.lambda, n, "lambda")?,
                    nu: o.nu,
                    frame: from_rows(&o.frame, n, "frame")?,
                    witness: (i, j, k),
                    scaling_constant: o.scaling_constant,
                }))
            }
            _ => Err(malformed("kind does not match the payload")),
        }
    }
}
