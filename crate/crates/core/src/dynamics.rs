//! Orbit computation and the dynamics of finitely generated groups on the
//! circle: trichotomy classification, contractible-interval searches, the
//! commuting periodic map bounding them, pinning elements, invariant-measure
//! heuristics, and gap-collapse semi-conjugacies.

pub mod classify;
pub mod collapse;
pub mod contraction;
pub mod measure;
pub mod orbit;
pub mod pinning;
pub mod theta;

pub use classify::{classify, ClassKind, Classification};
pub use collapse::{gap_collapse, GapCollapse};
pub use contraction::{find_contraction, ContractionWitness, SearchParams};
pub use measure::{invariant_measure_heuristic, MeasureReport};
pub use orbit::{orbit, OrbitSample};
pub use pinning::find_pinning_element;
pub use theta::{estimate_theta, ThetaEstimate};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("orbit budget exceeded: more than {cap} points")]
    BudgetExceeded { cap: usize },
    #[error("search budget exhausted")]
    SearchExhausted,
    #[error("estimated map not monotone at grid resolution; enlarge the word budget")]
    InconsistentMonotonicity,
    #[error("an invariant probability measure was detected; the construction does not apply")]
    InvariantMeasure,
    #[error("classification precondition failed: {0}")]
    WrongClassification(&'static str),
    #[error("no element with nonempty fixed set found up to length {0}")]
    NoFixedElement(usize),
    #[error("arcs are not pairwise disjoint")]
    ArcsNotDisjoint,
    #[error(transparent)]
    Word(#[from] crate::word::WordError),
    #[error(transparent)]
    Sampled(#[from] crate::sampled::SampledMapError),
}
