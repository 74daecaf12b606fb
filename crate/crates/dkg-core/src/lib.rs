//! Spectral laboratory for the Dirac–Klein–Gordon system on a periodic box.
//!
//! The kernel layers (grids, fields, transforms, multipliers, angular
//! decompositions, propagators, norms) are generic over the floating-point
//! scalar through [`scalar::Real`]; the laboratory layers (nonlinear
//! evolution, stationary states, estimate probes, io) pin `f64` through the
//! aliases exported at the crate root.

pub mod error;
pub mod scalar;

pub mod grid;

pub mod gamma;

pub mod field;

pub mod angular;
pub mod dynamics;
pub mod fit;
pub mod multipliers;
pub mod norms;

pub mod probes;
pub mod propagators;
pub mod soliton;

pub use error::{DkgError, Result};

/// Working scalar of the f64 laboratory layers.
pub type R = f64;
/// Complex working scalar.
pub type C = num_complex::Complex<R>;

pub type GridSpec = grid::GridSpec<R>;
pub type TimeGrid = grid::TimeGrid<R>;
pub type Field = field::Field<R>;
pub type Trajectory = field::Trajectory<R>;
pub type WavePacket = field::WavePacket<R>;
pub type WavePacketSum = field::WavePacketSum<R>;
pub type Mat4 = gamma::Mat4<R>;
pub type AngularPlan = angular::AngularPlan<R>;
pub type ShellIndex = angular::ShellIndex<R>;
pub type NormParams = norms::NormParams<R>;
pub type Regime = norms::Regime<R>;
pub type DKGState = dynamics::DKGState<R>;
pub type SolverConfig = dynamics::SolverConfig<R>;
pub type DiagnosticsRow = dynamics::DiagnosticsRow<R>;
pub type EvolveOutcome = dynamics::EvolveOutcome<R>;
pub type RadialProfilePair = soliton::RadialProfilePair<R>;
pub type RefineOptions = soliton::RefineOptions<R>;
pub type RefineReport = soliton::RefineReport<R>;
pub type FitResult = fit::FitResult<R>;
pub type PowerLaw = fit::PowerLaw<R>;
pub type Annulus = probes::Annulus<R>;
pub type ProbeConfig = probes::ProbeConfig<R>;
pub type ProbeCell = probes::ProbeCell<R>;
pub type ScalingReport = probes::ScalingReport<R>;
pub type ResonanceMin = probes::ResonanceMin<R>;
pub type StrichartzConfig = probes::StrichartzConfig<R>;
pub type BilinearConfig = probes::BilinearConfig<R>;
pub type TrilinearConfig = probes::TrilinearConfig<R>;
