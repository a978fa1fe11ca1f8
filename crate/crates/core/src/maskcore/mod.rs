//! Mask, geometry and morphology primitives.
//!
//! Coordinates are `(row, col)` with the origin at the top-left pixel and
//! row-major storage everywhere, including the wire formats.

mod components;
mod image;
mod mask;
mod measure;
mod morphology;

pub use components::{
    component_count, components_with, connected_components, label_flags, largest_component,
    Connectivity,
};
pub use image::ImageGrid;
pub use mask::{BBox, BinaryMask, LabeledMask, Source, UNCATEGORIZED};
pub use measure::{
    bbox_of, centroid, dice, foreground_fraction, iou, nearest_foreground_to_centroid,
};
pub use morphology::{close, dilate, erode, fill_holes, morph_clean, open};
