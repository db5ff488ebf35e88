//! Straightening of weakly perturbed constant vector fields on the torus T^N
//! and reduction of quasi-periodic linear transport operators to constant
//! coefficients.
//!
//! The crate is organized around a quadratically convergent conjugation
//! scheme: at each step a homological equation `α·∂θ g + Π_K f = ⟨f⟩` is
//! solved by Fourier division under diophantine conditions on `α`, the field
//! is pushed forward by `θ ↦ θ + g(θ)`, and the truncation `K_n = K₀^{(3/2)ⁿ}`
//! grows super-exponentially. Surviving parameters form a Cantor-like set
//! whose excluded measure scales like the diophantine constant `γ`.
//!
//! Modules:
//! - [`fourier`]: truncated Fourier series on T^N, Sobolev/Lipschitz norms,
//!   projections, products, grid transforms.
//! - [`diffeo`]: torus diffeomorphisms `θ ↦ θ + h(θ)`, inversion, composition,
//!   pushforward of vector fields.
//! - [`kam`]: the conjugation step and the full iteration.
//! - [`params`]: parameter grids, Cantor-set filtering, measure estimation.
//! - [`transport`]: the (φ, x) transport reduction, characteristics evolution,
//!   and the forced-equation solver.
//! - [`verify`]: independent flow-based oracles and estimate audits.
//!
//! With the default `parallel` feature, parameter sweeps and per-node
//! characteristic integrations run on a rayon pool; disabling the feature
//! yields a sequential build with identical results.

pub mod compose;
pub mod diffeo;
pub mod fourier;
pub mod grid;
pub mod kam;
pub mod parallel;
pub mod params;
pub mod transport;
pub mod verify;

pub use diffeo::{compose_diffeos, TorusDiffeo, VectorFieldOnTorus};
pub use fourier::{FourierField, LipschitzNorm};
pub use kam::{KamOutcome, SchemeConstants, StraighteningResult};
pub use params::{FrequencyMap, ParamGrid};
pub use transport::{ReducedTransport, TransportOperator};
