//! Gram matrix construction, validation and binary I/O.

use crate::error::{OedError, Result};
use crate::linalg;
use crate::pool::PoolMatrix;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

/// Relative symmetry tolerance for ingested Gram matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// PSD slack factor: eigenvalues down to `-1e-8 * max(diag)` are accepted.
pub const PSD_TOL_FACTOR: f64 = 1e-8;

const GRAM_MAGIC: &[u8; 4] = b"OEDG";

/// Kernel function selector.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf {
        gamma: f64,
    },
    Polynomial {
        degree: u32,
        coef0: f64,
    },
    /// Infinite-width fully-connected ReLU NTK with the given depth.
    NtkFc {
        depth: u32,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if gamma.is_nan() || gamma <= 0.0 => Err(
                OedError::InvalidInput(format!("rbf gamma must be positive, got {gamma}")),
            ),
            KernelSpec::Polynomial { degree, .. } if degree < 1 => Err(OedError::InvalidInput(
                "polynomial degree must be >= 1".into(),
            )),
            KernelSpec::NtkFc { depth } if depth < 1 => {
                Err(OedError::InvalidInput("ntk-fc depth must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, z),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, coef0 } => (dot(x, z) + coef0).powi(degree as i32),
            KernelSpec::NtkFc { depth } => ntk_fc_kernel(x, z, depth),
        }
    }
}

fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z.iter()).map(|(a, b)| a * b).sum()
}

/// Symmetric kernel matrix over the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    data: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates symmetry and finiteness. PSD is a structural property of the
    /// producing kernels and is checked separately (`min_eigenvalue`) where
    /// ingested data may carry rounding noise.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(OedError::InvalidInput(format!(
                "gram matrix must be square and nonempty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let scale = data.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                let (a, b) = (data[(i, j)], data[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(OedError::NonFiniteKernel { i, j });
                }
                if (a - b).abs() > SYMMETRY_TOL * scale.max(1.0) {
                    return Err(OedError::Asymmetric { i, j, a, b });
                }
            }
            if !data[(i, i)].is_finite() {
                return Err(OedError::NonFiniteKernel { i, j: i });
            }
        }
        Ok(Self { data })
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Numerical PSD tolerance for this matrix: `1e-8 * max(diag)`.
    pub fn psd_tolerance(&self) -> f64 {
        let max_diag = self.data.diagonal().iter().fold(0.0f64, |a, &v| a.max(v));
        PSD_TOL_FACTOR * max_diag.max(f64::MIN_POSITIVE)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.data)
    }

    /// Checks the numerical-PSD invariant.
    pub fn check_psd(&self) -> Result<()> {
        let min_eig = self.min_eigenvalue();
        let tol = self.psd_tolerance();
        if min_eig < -tol {
            Err(OedError::NotPsd { min_eig, tol })
        } else {
            Ok(())
        }
    }

    /// Principal submatrix `K_{S,S}`.
    pub fn submatrix(&self, s: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(s.len(), s.len(), |i, j| self.data[(s[i], s[j])])
    }

    /// Column block `K_{:,S}`.
    pub fn columns(&self, s: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.size(), s.len(), |i, j| self.data[(i, s[j])])
    }

    /// SHA-256 over the serialized bytes (dims + row-major f64 LE payload),
    /// rendered as lowercase hex. Used as the design output pool checksum.
    pub fn checksum(&self) -> String {
        checksum_matrix(&self.data)
    }

    /// Serializes in the binary Gram format: magic "OEDG", u32 LE dimension,
    /// then m*m f64 LE values row-major.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRAM_MAGIC)?;
        let m = self.size() as u32;
        w.write_all(&m.to_le_bytes())?;
        for i in 0..self.size() {
            for j in 0..self.size() {
                w.write_all(&self.data[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    /// Loads the binary Gram format, validating symmetry and finiteness.
    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| OedError::GramFormat("file too short for magic bytes".into()))?;
        if &magic != GRAM_MAGIC {
            return Err(OedError::GramFormat(format!(
                "bad magic bytes {:?}, expected {:?}",
                magic, GRAM_MAGIC
            )));
        }
        let mut dim_buf = [0u8; 4];
        r.read_exact(&mut dim_buf)
            .map_err(|_| OedError::GramFormat("file too short for dimension".into()))?;
        let m = u32::from_le_bytes(dim_buf) as usize;
        if m == 0 {
            return Err(OedError::GramFormat("zero dimension".into()));
        }
        let mut payload = vec![0u8; m * m * 8];
        r.read_exact(&mut payload).map_err(|_| {
            OedError::GramFormat(format!("truncated payload, expected {m}x{m} values"))
        })?;
        let mut data = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let off = (i * m + j) * 8;
                data[(i, j)] = f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
            }
        }
        Self::new(data)
    }

    pub fn load_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

/// SHA-256 hex digest of a dense matrix (dims as u32 LE, then row-major f64 LE).
pub fn checksum_matrix(data: &DMatrix<f64>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update((data.nrows() as u32).to_le_bytes());
    hasher.update((data.ncols() as u32).to_le_bytes());
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            hasher.update(data[(i, j)].to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the Gram matrix `K[i][j] = k(x_i, x_j)`. The upper triangle is
/// computed once and mirrored, so the result is symmetric by construction.
pub fn make_gram(pool: &PoolMatrix, spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let m = pool.num_points();
    let v = pool.matrix();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| v.row(i).iter().cloned().collect()).collect();

    // upper triangle, parallel over rows
    let tri: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| spec.eval(&rows[i], &rows[j])).collect())
        .collect();

    let mut data = DMatrix::zeros(m, m);
    for i in 0..m {
        for (off, &val) in tri[i].iter().enumerate() {
            let j = i + off;
            if !val.is_finite() {
                return Err(OedError::NonFiniteKernel { i, j });
            }
            data[(i, j)] = val;
            data[(j, i)] = val;
        }
    }
    GramMatrix::new(data)
}

/// Rectangular kernel block `K[i][j] = k(x_i, z_j)` between two pools
/// (e.g. test points against selected design points).
pub fn make_cross_gram(x: &PoolMatrix, z: &PoolMatrix, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if x.dim() != z.dim() {
        return Err(OedError::DimensionMismatch(format!(
            "pools have dimensions {} and {}",
            x.dim(),
            z.dim()
        )));
    }
    let xm = x.matrix();
    let zm = z.matrix();
    let xrows: Vec<Vec<f64>> = (0..x.num_points())
        .map(|i| xm.row(i).iter().cloned().collect())
        .collect();
    let zrows: Vec<Vec<f64>> = (0..z.num_points())
        .map(|i| zm.row(i).iter().cloned().collect())
        .collect();
    let vals: Vec<Vec<f64>> = xrows
        .par_iter()
        .map(|xi| zrows.iter().map(|zj| spec.eval(xi, zj)).collect())
        .collect();
    let mut data = DMatrix::zeros(x.num_points(), z.num_points());
    for (i, row) in vals.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(OedError::NonFiniteKernel { i, j });
            }
            data[(i, j)] = v;
        }
    }
    Ok(data)
}

/// Depth-`L` infinite-width fully-connected ReLU NTK between two points.
///
/// Standard arc-cosine recursion: `Σ⁰ = xᵀz`, per layer
/// `Σ^h = sqrt(Σxx Σzz)·κ₁(cos)` with the cosine clamped to [-1, 1], and the
/// NTK accumulates `Θ^h = Σ^h + Θ^{h-1}·κ₀(cos)`.
pub fn ntk_fc_kernel(x: &[f64], z: &[f64], depth: u32) -> f64 {
    assert_eq!(x.len(), z.len(), "ntk inputs must share a dimension");
    assert!(depth >= 1, "ntk depth must be >= 1");
    let s_xx = dot(x, x);
    let s_zz = dot(z, z);
    let mut s_xz = dot(x, z);
    let mut theta = s_xz;
    for _ in 0..depth {
        let denom = (s_xx * s_zz).sqrt();
        let cos = if denom > 0.0 {
            (s_xz / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let angle = cos.acos();
        let kappa0 = (std::f64::consts::PI - angle) / std::f64::consts::PI;
        let kappa1 = ((1.0 - cos * cos).max(0.0).sqrt() + (std::f64::consts::PI - angle) * cos)
            / std::f64::consts::PI;
        s_xz = denom * kappa1;
        // Σ(x,x) is invariant under the normalized ReLU update; s_xx, s_zz stay.
        theta = s_xz + theta * kappa0;
    }
    theta
}
