//! Datasets, covariate subset codes and design matrices.
//!
//! A subset of the `k` covariates is encoded as the integer `sum e_j 2^(j-1)`,
//! so bit `j - 1` is set when covariate `j` is included. The intercept is
//! never part of the code: every design matrix carries it as column 0.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest covariate count for which exhaustive subset enumeration is allowed.
pub const MAX_COVARIATES: usize = 24;

/// Response vector, covariate matrix and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    response_name: String,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
        response_name: impl Into<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {n}")));
        }
        if x.nrows() != n {
            return Err(Error::InvalidData(format!(
                "response has {n} rows but covariate matrix has {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("need at least one covariate".into()));
        }
        if names.len() != x.ncols() {
            return Err(Error::InvalidData(format!(
                "{} covariate names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {}", i + 1)));
        }
        for j in 0..x.ncols() {
            if let Some(i) = x.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value in column '{}' at row {}",
                    names[j],
                    i + 1
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate covariate name '{name}'")));
            }
        }
        Ok(Dataset {
            y: DVector::from_vec(y),
            x,
            names,
            response_name: response_name.into(),
        })
    }

    /// Build from covariate columns given as plain vectors.
    pub fn from_columns(
        y: Vec<f64>,
        columns: &[Vec<f64>],
        names: &[&str],
        response_name: &str,
    ) -> Result<Self> {
        let n = y.len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::InvalidData(format!(
                "covariate column of length {} for {n} observations",
                c.len()
            )));
        }
        let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Dataset::new(y, x, names.iter().map(|s| s.to_string()).collect(), response_name)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn full(&self) -> SubsetCode {
        SubsetCode::full(self.k())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same covariates, different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(y, self.x.clone(), self.names.clone(), self.response_name.clone())
    }

    /// Same response, different covariates (names are kept when the width matches).
    pub fn with_covariates(&self, x: DMatrix<f64>) -> Result<Self> {
        let names = if x.ncols() == self.k() {
            self.names.clone()
        } else {
            (1..=x.ncols()).map(|j| format!("Z{j}")).collect()
        };
        Dataset::new(self.y.as_slice().to_vec(), x, names, self.response_name.clone())
    }

    /// Keep only the covariates in `e`, in ascending order.
    pub fn restrict(&self, e: SubsetCode) -> Result<Self> {
        e.check(self.k())?;
        let cols = e.members(self.k());
        if cols.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot restrict a dataset to the empty covariate set".into(),
            ));
        }
        let x = self.x.select_columns(cols.iter());
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        Dataset::new(self.y.as_slice().to_vec(), x, names, self.response_name.clone())
    }

    /// Names of the covariates included in `e`.
    pub fn subset_names(&self, e: SubsetCode) -> Vec<&str> {
        e.members(self.k()).into_iter().map(|j| self.names[j].as_str()).collect()
    }

    /// Read a CSV file with a header row; `response` names the response
    /// column and every other column becomes a covariate.
    pub fn from_csv_path(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Dataset::from_csv_reader(file, response)
    }

    pub fn from_csv_reader<R: Read>(reader: R, response: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(1, "", e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let ycol = headers.iter().position(|h| h == response).ok_or_else(|| Error::Csv {
            row: 1,
            column: response.to_string(),
            message: format!("response column '{response}' not found in header"),
        })?;
        let mut ys = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
        for (r, record) in rdr.records().enumerate() {
            let row = r + 2;
            let record = record.map_err(|e| csv_err(row, "", e))?;
            if record.len() != headers.len() {
                return Err(Error::Csv {
                    row,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let mut c = 0;
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                    row,
                    column: headers[j].clone(),
                    message: format!("non-numeric value '{cell}'"),
                })?;
                if j == ycol {
                    ys.push(v);
                } else {
                    cols[c].push(v);
                    c += 1;
                }
            }
        }
        let names: Vec<&str> = headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != ycol)
            .map(|(_, h)| h.as_str())
            .collect();
        Dataset::from_columns(ys, &cols, &names, response)
    }
}

fn csv_err(row: usize, column: &str, e: csv::Error) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}

/// Bitmask over covariates: bit `j` set means covariate `j + 1` is included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetCode(u32);

impl SubsetCode {
    pub const EMPTY: SubsetCode = SubsetCode(0);

    pub fn new(bits: u32) -> Self {
        SubsetCode(bits)
    }

    pub fn full(k: usize) -> Self {
        debug_assert!(k <= 31);
        SubsetCode(((1u64 << k) - 1) as u32)
    }

    /// Encode an inclusion vector `e = (e_1, ..., e_k)`.
    pub fn from_flags(flags: &[bool]) -> Self {
        SubsetCode(
            flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .fold(0u32, |acc, (j, _)| acc | (1 << j)),
        )
    }

    pub fn to_flags(self, k: usize) -> Vec<bool> {
        (0..k).map(|j| self.contains(j)).collect()
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Zero-based covariate index `j`.
    pub fn contains(self, j: usize) -> bool {
        j < 32 && self.0 & (1 << j) != 0
    }

    /// `k(e)`, the number of included covariates.
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn complement(self, k: usize) -> Self {
        SubsetCode(!self.0 & Self::full(k).0)
    }

    pub fn is_full(self, k: usize) -> bool {
        self == Self::full(k)
    }

    /// `self < other` bitwise: every covariate of `self` is in `other`, and they differ.
    pub fn is_proper_subset_of(self, other: SubsetCode) -> bool {
        self.0 & other.0 == self.0 && self.0 != other.0
    }

    /// Included covariate indices (zero-based, ascending).
    pub fn members(self, k: usize) -> Vec<usize> {
        (0..k).filter(|&j| self.contains(j)).collect()
    }

    /// Proper subsets of `self`, ascending by code.
    pub fn proper_subsets(self) -> Vec<SubsetCode> {
        let mut out = Vec::with_capacity((1usize << self.size()) - 1);
        // Enumerate submasks of `self` in ascending order.
        let mut sub = 0u32;
        loop {
            if sub != self.0 {
                out.push(SubsetCode(sub));
            }
            if sub == self.0 {
                break;
            }
            sub = (sub.wrapping_sub(self.0)) & self.0;
        }
        out
    }

    /// Re-express `self` in the coordinates of `outer`: bit `i` of the result
    /// is set when the `i`-th member of `outer` belongs to `self`.
    pub fn reindex_within(self, outer: SubsetCode, k: usize) -> SubsetCode {
        let mut bits = 0u32;
        for (i, j) in outer.members(k).into_iter().enumerate() {
            if self.contains(j) {
                bits |= 1 << i;
            }
        }
        SubsetCode(bits)
    }

    pub(crate) fn check(self, k: usize) -> Result<()> {
        if self.0 & !Self::full(k).0 != 0 {
            return Err(Error::InvalidArgument(format!(
                "subset code {} is out of range for {k} covariates",
                self.0
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SubsetCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// All `2^k` subset codes in ascending order.
pub fn subsets_of(k: usize) -> Result<Vec<SubsetCode>> {
    if !(1..=MAX_COVARIATES).contains(&k) {
        return Err(Error::Capacity {
            what: "covariate count",
            value: k,
            max: MAX_COVARIATES,
        });
    }
    Ok((0..(1u32 << k)).map(SubsetCode).collect())
}

/// `[1 | X(e)]`: intercept column followed by the included covariates in ascending order.
pub fn design_matrix(d: &Dataset, e: SubsetCode) -> DMatrix<f64> {
    let cols = e.members(d.k());
    let n = d.n();
    let mut m = DMatrix::zeros(n, cols.len() + 1);
    m.column_mut(0).fill(1.0);
    for (c, &j) in cols.iter().enumerate() {
        m.column_mut(c + 1).copy_from(&d.x().column(j));
    }
    m
}

/// Column labels matching [`design_matrix`].
pub fn design_names(d: &Dataset, e: SubsetCode) -> Vec<String> {
    std::iter::once("(Intercept)".to_string())
        .chain(e.members(d.k()).into_iter().map(|j| d.names()[j].clone()))
        .collect()
}

const STACKLOSS_AIR_FLOW: [f64; 21] = [
    80.0, 80.0, 75.0, 62.0, 62.0, 62.0, 62.0, 62.0, 58.0, 58.0, 58.0, 58.0, 58.0, 58.0, 50.0, 50.0,
    50.0, 50.0, 50.0, 56.0, 70.0,
];
const STACKLOSS_WATER_TEMP: [f64; 21] = [
    27.0, 27.0, 25.0, 24.0, 22.0, 23.0, 24.0, 24.0, 23.0, 18.0, 18.0, 17.0, 18.0, 19.0, 18.0, 18.0,
    19.0, 19.0, 20.0, 20.0, 20.0,
];
const STACKLOSS_ACID_CONC: [f64; 21] = [
    89.0, 88.0, 90.0, 87.0, 87.0, 87.0, 93.0, 93.0, 87.0, 80.0, 89.0, 88.0, 82.0, 93.0, 89.0, 86.0,
    72.0, 79.0, 80.0, 82.0, 91.0,
];
const STACKLOSS_LOSS: [f64; 21] = [
    42.0, 37.0, 37.0, 28.0, 18.0, 18.0, 19.0, 20.0, 15.0, 14.0, 14.0, 13.0, 11.0, 12.0, 8.0, 7.0,
    8.0, 8.0, 9.0, 15.0, 15.0,
];

/// Brownlee's stack loss data: 21 observations, three covariates.
pub fn stackloss() -> Dataset {
    Dataset::from_columns(
        STACKLOSS_LOSS.to_vec(),
        &[
            STACKLOSS_AIR_FLOW.to_vec(),
            STACKLOSS_WATER_TEMP.to_vec(),
            STACKLOSS_ACID_CONC.to_vec(),
        ],
        &["Air.Flow", "Water.Temp", "Acid.Conc"],
        "Stack.Loss",
    )
    .expect("embedded dataset is valid")
}

/// Names of the embedded datasets.
pub fn builtin_names() -> &'static [&'static str] {
    &["stackloss"]
}

pub fn builtin(name: &str) -> Option<Dataset> {
    match name {
        "stackloss" => Some(stackloss()),
        _ => None,
    }
}
