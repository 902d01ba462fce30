pub mod code;
pub mod fit;
pub mod model;
pub mod objective;
pub mod tree;

pub use code::{parse_code, AngleCode, BranchCode, Code};
pub use fit::{fit_bifurcation, FitResult, OptimizerConfig};
pub use model::BifurcationParams;
pub use objective::{surface_objective, LumenField, ObjectiveConfig};
pub use tree::{collect_angles, extract_tree, extract_tree_from_field, AirwayTree, AngleList, ExtractConfig, TreeEntry};
