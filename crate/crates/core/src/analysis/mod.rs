//! Feature-space separability, shared-basis PCA and occlusion heat maps.

pub mod features;
pub mod heatmap;
pub mod pca;

pub use features::{extract_features, separability, FeatureSet, KahanSum, SeparabilityReport};
pub use heatmap::{default_stride, grid_len, heatmap, Confidence, HeatMap};
pub use pca::{pca_fit, pca_project, symmetric_eigen, Projection};

use std::fmt::Write as _;

use crate::occlusion::OcclusionType;

/// One row of the separability table.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityRow {
    pub variant: String,
    pub kind: OcclusionType,
    pub level: u32,
    pub report: SeparabilityReport,
}

/// `variant,type,level,J,d_inter,d_intra`.
pub fn separability_csv(rows: &[SeparabilityRow]) -> String {
    let mut s = String::from("variant,type,level,J,d_inter,d_intra\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variant, r.kind, r.level, r.report.j, r.report.d_inter, r.report.d_intra
        );
    }
    s
}

/// `class,level,pc1,pc2` for projected points.
pub fn pca_csv(points: &[(usize, u32, Vec<f64>)]) -> String {
    let mut s = String::from("class,level,pc1,pc2\n");
    for (class, level, c) in points {
        let pc2 = c.get(1).copied().unwrap_or(0.0);
        let _ = writeln!(s, "{class},{level},{},{pc2}", c[0]);
    }
    s
}
