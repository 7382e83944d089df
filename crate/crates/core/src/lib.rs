//! Cross-modal attention anchors.
//!
//! Copies a text token next to its most similar image token (or the reverse)
//! so that attention between matched content no longer has to cross the
//! full modality gap. Around that transform the crate carries the tools used
//! to check its behaviour numerically: attention ratios under additive and
//! rotary positional schemes, F1-optimal thresholds, windowed mutual
//! information, wall-clock scaling, and constructed failure cases.
//!
//! ```
//! use attanchor::{build_similarity_matrix, insert_text_into_image, plan_text_into_image, EmbeddingSet};
//!
//! let e = EmbeddingSet::new(
//!     2,
//!     vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
//!     vec![vec![0.0, 2.0], vec![1.0, 0.1]],
//! )?;
//! let sim = build_similarity_matrix(&e);
//! let plan = plan_text_into_image(&sim, 0.9)?;
//! let seq = insert_text_into_image(&e, &plan)?;
//! assert_eq!(seq.len(), 2 + 3 + plan.len());
//! # Ok::<(), attanchor::Error>(())
//! ```

pub mod anchor;
pub mod attention;
pub mod bench;
pub mod cli;
pub mod error;
pub mod failure;
pub mod info;
pub mod report;
pub mod synth;
pub mod threshold;
pub mod tokens;

pub use anchor::{
    anchor_fraction, calibrate_threshold, insert_image_into_text, insert_text_into_image,
    plan_image_into_text, plan_text_into_image, reorder, AnchorEntry, AnchorPlan,
    ImageIntoTextConfig, Mode, SequenceDocument,
};
pub use attention::{
    rope_rotate, softmax, verify_theorem1, AttentionInstance, BiasFamily, BiasModel, Theorem1Report,
};
pub use error::{Error, Result};
pub use failure::{run_failure_scenario, FailureKind, FailureScenario};
pub use info::{local_mi_experiment, mutual_information, JointDistribution, LocalityWindow};
pub use threshold::{
    gaussian_oracle, optimal_threshold, CorrespondenceLabels, GaussianMixtureSpec,
};
pub use tokens::{
    argmax_match, build_similarity_matrix, cosine_similarity, ClusterLabels, EmbeddingSet,
    MultimodalSequence, SimilarityMatrix, Token, TokenKind,
};
