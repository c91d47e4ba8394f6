//! Replacement noise and the reproducible per-replicate random streams.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by the user seed
//! and selected by the replicate index, so results do not depend on the
//! order in which replicates are executed or on the number of workers.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{design_matrix, Dataset, SubsetCode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Rademacher,
    /// U(-1, 1)
    Uniform,
    /// A Beta(5, 5) variable with a random sign.
    SignedBeta,
    Cauchy,
    /// `x_ij * Z_ij` with `Z` standard Gaussian; needs the covariate as template.
    CovariateScaled,
    /// A random row permutation of the template columns.
    Permutation,
}

impl NoiseKind {
    pub fn needs_template(self) -> bool {
        matches!(self, NoiseKind::CovariateScaled | NoiseKind::Permutation)
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
            NoiseKind::Uniform => "uniform",
            NoiseKind::SignedBeta => "signed-beta",
            NoiseKind::Cauchy => "cauchy",
            NoiseKind::CovariateScaled => "scaled",
            NoiseKind::Permutation => "permute",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => NoiseKind::Gaussian,
            "rademacher" => NoiseKind::Rademacher,
            "uniform" => NoiseKind::Uniform,
            "signed-beta" => NoiseKind::SignedBeta,
            "cauchy" => NoiseKind::Cauchy,
            "scaled" => NoiseKind::CovariateScaled,
            "permute" => NoiseKind::Permutation,
            _ => return Err(Error::InvalidArgument(format!("unknown noise kind '{s}'"))),
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a path of indices into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

/// A replicate's random stream: `(seed, replicate_index)` fully determine the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub replicate_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, replicate_index: u64) -> Self {
        RngStream { seed, replicate_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut s = self.seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replicate_index);
        rng
    }
}

/// One noise draw of the given kind (template-free kinds only).
pub(crate) fn draw<R: Rng + ?Sized>(kind: NoiseKind, rng: &mut R) -> f64 {
    match kind {
        NoiseKind::Gaussian | NoiseKind::CovariateScaled => rng.sample(StandardNormal),
        NoiseKind::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        NoiseKind::Uniform => rng.random_range(-1.0..1.0),
        NoiseKind::SignedBeta => {
            let b: f64 = Beta::new(5.0, 5.0).expect("valid beta").sample(rng);
            if rng.random::<bool>() {
                b
            } else {
                -b
            }
        }
        NoiseKind::Cauchy => Cauchy::new(0.0, 1.0).expect("valid cauchy").sample(rng),
        NoiseKind::Permutation => unreachable!("permutation noise needs a template"),
    }
}

/// Fill the columns of `out` (column-major, `n` rows) with noise; `template`
/// supplies the covariate values for the scaled and permutation kinds.
pub(crate) fn fill_noise<R: Rng + ?Sized>(
    out: &mut [f64],
    n: usize,
    kind: NoiseKind,
    template: Option<&[f64]>,
    rng: &mut R,
) {
    match kind {
        NoiseKind::Permutation => {
            let t = template.expect("template checked by caller");
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            for (col, tcol) in out.chunks_mut(n).zip(t.chunks(n)) {
                for (o, &p) in col.iter_mut().zip(&perm) {
                    *o = tcol[p];
                }
            }
        }
        NoiseKind::CovariateScaled => {
            let t = template.expect("template checked by caller");
            for (o, &x) in out.iter_mut().zip(t) {
                *o = x * draw(kind, rng);
            }
        }
        _ => {
            for o in out.iter_mut() {
                *o = draw(kind, rng);
            }
        }
    }
}

/// An `n x m` noise matrix; deterministic in `stream`.
pub fn noise_matrix(
    n: usize,
    m: usize,
    kind: NoiseKind,
    stream: RngStream,
    template: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("noise matrix needs n, m >= 1".into()));
    }
    if kind.needs_template() {
        match template {
            None => {
                return Err(Error::InvalidArgument(format!("noise kind '{kind}' needs a template matrix")))
            }
            Some(t) if t.nrows() != n || t.ncols() != m => {
                return Err(Error::InvalidArgument(format!(
                    "template is {}x{}, expected {n}x{m}",
                    t.nrows(),
                    t.ncols()
                )))
            }
            _ => {}
        }
    }
    let mut out = DMatrix::zeros(n, m);
    let mut rng = stream.rng();
    fill_noise(out.as_mut_slice(), n, kind, template.map(|t| t.as_slice()), &mut rng);
    Ok(out)
}

/// Mixed matrix `[1 | W(e)]`: retained covariates kept, excluded ones replaced by noise.
pub fn build_w(d: &Dataset, e: SubsetCode, kind: NoiseKind, stream: RngStream) -> Result<DMatrix<f64>> {
    e.check(d.k())?;
    let excluded = e.complement(d.k()).members(d.k());
    let mut w = design_matrix(d, d.full());
    if excluded.is_empty() {
        return Ok(w);
    }
    let template = d.x().select_columns(excluded.iter());
    let z = noise_matrix(d.n(), excluded.len(), kind, stream, Some(&template))?;
    for (c, &j) in excluded.iter().enumerate() {
        w.column_mut(j + 1).copy_from(&z.column(c));
    }
    Ok(w)
}
