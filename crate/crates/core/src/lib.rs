//! Sparse subspace clustering with orthogonal matching pursuit.
//!
//! The pipeline is the usual self-expressive one:
//!
//! 1. every point `x_i` is written as a sparse combination of the other points
//!    (OMP over the dictionary `X_{-i}`), giving a coefficient matrix `C`;
//! 2. the affinity `A = |C| + |C^T|` is segmented by normalized spectral clustering.
//!
//! On top of that, [`adaptive`] assigns each point its own OMP budget from the
//! neighborhood structure of the Gram matrix, so that points deep inside a
//! cluster may use more atoms and points near a boundary fewer.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`data`] | data matrices, labels, CSV I/O, synthetic unions of subspaces, noise |
//! | [`adaptive`] | per-point dictionary sizes (`KArray`) |
//! | [`omp`] | OMP solver and the self-expressive drivers |
//! | [`spectral`] | affinity construction, normalized Laplacian, spectral clustering |
//! | [`metrics`] | ACCR, TIME, CONN, PERC, SSR and SEA |
//! | [`experiment`] | trials, sweeps and baseline/adaptive comparisons |

pub mod adaptive;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hungarian;
pub mod kmeans;
pub mod metrics;
pub mod omp;
pub mod seed;
pub mod spectral;

pub use adaptive::{compute_k_array, neighborhood_scores, Gram, KArray, NeighborhoodScore};
pub use data::{
    add_gaussian_noise, generate_synthetic, load_csv, normalize_columns, DataMatrix, Labels,
    NoiseMode, SyntheticSpec,
};
pub use error::{Result, SscError};
pub use metrics::{
    accuracy, connectivity, sea_ratio, subspace_preserving_error, subspace_preserving_rate, timed,
    MetricsReport,
};
pub use omp::{omp_solve, ssc_omp, ssc_omp_adaptive, CoefMatrix, OmpConfig, SparseCode};
pub use spectral::{build_affinity, normalized_laplacian, spectral_cluster, AffinityMatrix, SpectralConfig};
