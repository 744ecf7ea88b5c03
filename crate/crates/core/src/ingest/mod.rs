//! Dataset manifests, image decoding and dense patch features.

mod features;
mod manifest;
mod pnm;

pub use features::{
    decode_feature_matrix, encode_feature_matrix, extract_patch_features, load_features,
    write_feature_matrix, BaselineDescriptor, FeatureExtractor, FeatureSet, PatchFeature,
    ORIENTATION_BINS,
};
pub use manifest::{load_manifest, DatasetManifest, EntityGroup, ManifestEntry};
pub use pnm::{decode_pnm, encode_pnm, pnm_dimensions, read_pnm, write_pnm, RasterImage};
