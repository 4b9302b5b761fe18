//! Assignment-based texturing: candidate tables, MRF labeling and atlas
//! baking.

pub mod atlas;
pub mod candidates;
pub mod maxflow;
pub mod mrf;

pub use atlas::{bake_atlas, ChartRect, TextureAtlas};
pub use candidates::{build_candidate_table, occlusion_test, Candidate, ViewCandidateTable};
pub use mrf::{solve_labels, LabelAssignment, MrfProblem, SolverOptions, UNTEXTURED};
