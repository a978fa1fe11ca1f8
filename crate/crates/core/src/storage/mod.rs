//! Persistent dataset layout: CSR mask planes, the `.imsk` container,
//! PNG rasters and the JSON manifest.

mod container;
mod csr;
mod dataset;
mod manifest;
mod raster;

pub use container::{
    read_container, write_container, ContainerEntry, ContainerError, MaskContainer, HEADER_LEN,
    MAGIC, TRAILER_LEN, VERSION,
};
pub use csr::{decode_csr, encode_csr, validate_csr, CsrError, CsrMask};
pub use dataset::{discover, one_hot_split, Dataset, IMAGE_DIR, MANIFEST_FILE, MASK_DIR};
pub use manifest::{ImageRecord, Manifest, Split};
pub use raster::{
    decode_image, encode_png, read_image, read_label_map, write_image, write_label_map, LabelMap,
};
