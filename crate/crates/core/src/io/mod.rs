//! File formats: NIfTI-1 images and JSON placement sidecars.

pub mod nifti;
pub mod sidecar;

pub use nifti::{
    read_label_map, read_nifti, read_volume, wants_gzip, write_label_map, write_volume, write_volume_as, Dtype,
};
pub use sidecar::{parse_placement, read_placement, write_placement};
