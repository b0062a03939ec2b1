//! Correlation matrices: validation, Gram construction and factorization,
//! sample correlations from data, and random generation.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng;
use crate::scalar::Real;

/// Default band on the smallest eigenvalue when checking positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Largest asymmetry accepted (and then symmetrized away) by [`validate_corr`].
pub const SYMMETRY_TOL: f64 = 1e-9;
const DIAGONAL_TOL: f64 = 1e-9;
const RANGE_BAND: f64 = 1e-12;
const UNIT_NORM_TOL: f64 = 1e-12;

/// A symmetric positive-semidefinite matrix with unit diagonal.
///
/// Indices into a `CorrMatrix` are 0-based; DAG node `k` corresponds to row `k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix<T = f64> {
    entries: Matrix<T>,
    labels: Option<Vec<String>>,
}

impl<T: Real> CorrMatrix<T> {
    /// Validates with the default PSD tolerance. See [`validate_corr`].
    pub fn new(raw: &[Vec<T>]) -> Result<Self> {
        validate_corr(raw)
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: Matrix::identity(n), labels: None }
    }

    /// Wraps a matrix known to be a Gram matrix of unit vectors: the diagonal is
    /// reset to exactly one and off-diagonal round-off is clamped into `[-1, 1]`.
    pub(crate) fn from_gram_unchecked(mut m: Matrix<T>) -> Self {
        let n = m.rows();
        for i in 0..n {
            m[(i, i)] = T::one();
            for j in i + 1..n {
                let v = ((m[(i, j)] + m[(j, i)]) / T::lit(2.0)).max(-T::one()).min(T::one());
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { entries: m, labels: None }
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.entries.to_rows()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: labels.len() });
        }
        check_unique(&labels)?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Position of the variable with the given label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|l| l == label)
    }

    /// Principal submatrix over `idx` (0-based, in the given order); labels follow.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self {
            entries: self.entries.select(idx, idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    pub fn min_eigenvalue(&self) -> T {
        self.entries.min_eigenvalue()
    }

    pub fn cast<U: Real>(&self) -> CorrMatrix<U> {
        CorrMatrix {
            entries: Matrix::from_fn(self.n(), self.n(), |i, j| U::lit(self.get(i, j).as_f64())),
            labels: self.labels.clone(),
        }
    }
}

/// [`validate_corr_with_tol`] at the default tolerance [`PSD_TOL`].
pub fn validate_corr<T: Real>(raw: &[Vec<T>]) -> Result<CorrMatrix<T>> {
    validate_corr_with_tol(raw, T::tol(PSD_TOL))
}

/// Checks squareness, symmetry (within [`SYMMETRY_TOL`], then symmetrized exactly),
/// unit diagonal, entry range and positive semidefiniteness (smallest eigenvalue
/// at least `-psd_tol`).
pub fn validate_corr_with_tol<T: Real>(raw: &[Vec<T>], psd_tol: T) -> Result<CorrMatrix<T>> {
    let n = raw.len();
    for (row, r) in raw.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NotSquare { rows: n, row, cols: r.len() });
        }
    }
    let mut m = Matrix::from_rows(raw).unwrap_or_else(|| Matrix::zeros(0, 0));
    for i in 0..n {
        for j in 0..n {
            if !m[(i, j)].is_finite() {
                return Err(Error::EntryOutOfRange { i, j, value: m[(i, j)].as_f64() });
            }
        }
    }
    for i in 0..n {
        let d = m[(i, i)];
        if (d - T::one()).abs() > T::tol(DIAGONAL_TOL) {
            return Err(Error::DiagonalNotUnit { i, value: d.as_f64() });
        }
        m[(i, i)] = T::one();
        for j in i + 1..n {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > T::tol(SYMMETRY_TOL) {
                return Err(Error::NotSymmetric { i, j, gap: gap.as_f64() });
            }
            let mut v = (m[(i, j)] + m[(j, i)]) / T::lit(2.0);
            if v.abs() > T::one() + T::tol(RANGE_BAND) {
                return Err(Error::EntryOutOfRange { i, j, value: v.as_f64() });
            }
            v = v.max(-T::one()).min(T::one());
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let min_eigenvalue = m.min_eigenvalue();
    if n > 0 && min_eigenvalue < -psd_tol {
        return Err(Error::NotPsd { min_eigenvalue: min_eigenvalue.as_f64() });
    }
    Ok(CorrMatrix { entries: m, labels: None })
}

/// A sequence of unit vectors of common dimension; their Gram matrix is a correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitVectorConfig<T = f64> {
    vectors: Vec<Vec<T>>,
}

impl<T: Real> UnitVectorConfig<T> {
    pub fn new(vectors: Vec<Vec<T>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            let nv = norm(v);
            if (nv - T::one()).abs() > T::tol(UNIT_NORM_TOL) {
                return Err(Error::NotUnitNorm { index, norm: nv.as_f64() });
            }
        }
        Ok(Self { vectors })
    }

    /// Normalizes every vector first; fails on a zero vector.
    pub fn normalized(vectors: Vec<Vec<T>>) -> Result<Self> {
        let mut out = Vec::with_capacity(vectors.len());
        for (index, v) in vectors.into_iter().enumerate() {
            let nv = norm(&v);
            if nv <= T::zero() || !nv.is_finite() {
                return Err(Error::NotUnitNorm { index, norm: nv.as_f64() });
            }
            out.push(v.into_iter().map(|x| x / nv).collect());
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec<T>> {
        self.vectors
    }
}

/// Correlation matrix with entries `dot(a_i, a_j)`. Gram matrices are PSD by
/// construction, so no eigenvalue check is performed.
pub fn gram_from_vectors<T: Real>(cfg: &UnitVectorConfig<T>) -> CorrMatrix<T> {
    let v = cfg.vectors();
    let n = v.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let d = dot(&v[i], &v[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    CorrMatrix::from_gram_unchecked(m)
}

/// A Gram factorization `rho = A Aᵀ` from the eigen-decomposition, with rows of `A`
/// returned as unit vectors of dimension `n`. Eigenvalues inside the PSD band are
/// treated as zero.
pub fn gram_factor<T: Real>(rho: &CorrMatrix<T>) -> UnitVectorConfig<T> {
    let n = rho.n();
    let (values, vectors) = rho.matrix().symmetric_eigen();
    let roots: Vec<T> = values.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    let rows = (0..n)
        .map(|i| (0..n).map(|k| vectors[(i, k)] * roots[k]).collect())
        .collect();
    UnitVectorConfig::normalized(rows).expect("rows of a Gram factor of a unit-diagonal matrix are nonzero")
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(names: Vec<String>, columns: Vec<Vec<T>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch { expected: names.len(), found: columns.len() });
        }
        check_unique(&names)?;
        let rows = columns.first().map_or(0, Vec::len);
        for c in &columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch { expected: rows, found: c.len() });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse("non-finite observation".into()));
            }
        }
        Ok(Self { names, columns })
    }

    /// Reads UTF-8 comma-separated data whose first row holds the column names.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("row {}, column `{}`: cannot parse {field:?} as a number", line + 1, names[j]))
                })?;
                columns[j].push(T::lit(value));
            }
        }
        Self::new(names, columns)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Pairwise correlations of the columns, each standardized with the population
/// divisor `N`.
pub fn sample_corr<T: Real>(data: &Dataset<T>) -> Result<CorrMatrix<T>> {
    let rows = data.n_rows();
    if rows < 2 {
        return Err(Error::TooFewRows(rows));
    }
    let count = T::from_usize_lossy(rows);
    let mut standardized = Vec::with_capacity(data.columns.len());
    for (name, col) in data.names.iter().zip(&data.columns) {
        let mean = col.iter().copied().sum::<T>() / count;
        let centered: Vec<T> = col.iter().map(|&x| x - mean).collect();
        let sd = (dot(&centered, &centered) / count).sqrt();
        let scale = col.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if sd <= T::epsilon() * T::lit(64.0) * scale || sd == T::zero() {
            return Err(Error::ZeroVarianceColumn(name.clone()));
        }
        standardized.push(centered.into_iter().map(|x| x / sd).collect::<Vec<T>>());
    }
    let p = standardized.len();
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let r = dot(&standardized[i], &standardized[j]) / count;
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    CorrMatrix::from_gram_unchecked(m).with_labels(data.names.clone())
}

/// Gram matrix of `n` independent uniformly random unit vectors in `dim` dimensions.
pub fn random_corr<T: Real>(n: usize, dim: usize, seed: u64) -> Result<CorrMatrix<T>> {
    if dim < 2 || dim > n {
        return Err(Error::BadDimension(format!("need 2 <= dim <= n, got dim = {dim}, n = {n}")));
    }
    let mut rng = rng::seeded(seed);
    let vectors = (0..n).map(|_| rng::unit_vector(&mut rng, dim)).collect();
    Ok(gram_from_vectors(&UnitVectorConfig { vectors }))
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Parse(format!("duplicate column name `{n}`")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CorrMatrixRepr<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    entries: Vec<Vec<T>>,
}

impl<T: Real> Serialize for CorrMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CorrMatrixRepr { labels: self.labels.clone(), entries: self.to_rows() }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for CorrMatrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CorrMatrixRepr::<T>::deserialize(d)?;
        let m = validate_corr(&repr.entries).map_err(serde::de::Error::custom)?;
        match repr.labels {
            Some(l) => m.with_labels(l).map_err(serde::de::Error::custom),
            None => Ok(m),
        }
    }
}
