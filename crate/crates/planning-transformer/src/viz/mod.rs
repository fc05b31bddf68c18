//! Static SVG visualization of rollouts: plan overlays on the maze and
//! attention heatmaps. Rendering is pure; it never mutates records.

mod attention;
mod plan_overlay;
pub mod svg;

pub use attention::render_attention;
pub use plan_overlay::render_plan_overlay;
pub use svg::is_well_formed_xml;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("{0}")]
    NotPlanar(String),
    #[error("attention capture is empty")]
    EmptyCapture,
}
