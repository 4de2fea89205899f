//! Forward sufficient dimension reduction for categorical and ordinal responses.
//!
//! The central estimators are the outer product of canonical gradients
//! ([`opcg::opcg_fit`]) and the minimum average deviance estimator
//! ([`made::made_fit`]). Both fit kernel-weighted local linear multivariate GLMs
//! ([`localglm`]) under the canonical links in [`links`].

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linalg;
pub mod links;
pub mod localglm;
pub mod made;
pub mod opcg;
pub mod optim;
pub mod order;
pub mod simbench;
pub mod tuning;

pub use baselines::{fit_method, Method, MethodConfig, OpgResponse};
pub use dataset::LabeledDataset;
pub use error::{Result, SdrError};
pub use links::{AltLink, CanonicalParam, EncodedResponse, Family, FamilyKind, ProbabilityVector, SurvivorVector};
pub use localglm::{KernelWeights, LocalFit, OptimizerConfig, Solver};
pub use made::{made_fit, MadeConfig, MadeInit, MadeState};
pub use opcg::{opcg_fit, CandidateMatrix, OpcgConfig, SdrBasis, Standardization};
pub use order::{default_augment, default_d_max, predictor_augmentation, OrderEstimate};
pub use simbench::{generate_simulation, SimConfig, Simulation};
pub use tuning::{kmeans, KmeansResult, TuningConfig, TuningCurve, TuningMethod};
