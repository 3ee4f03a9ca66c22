pub mod augment;
pub mod canny;
pub mod endpoint;
pub mod image;
pub mod manifest;
pub mod split;
pub mod synthetic;

pub use augment::{ablation_manifests, augment, AugmentConfig, AugmentOutcome, Quarantined, Services, ABLATIONS};
pub use canny::{canny_edges, EdgeMap};
pub use endpoint::{CaptionClient, GenerationClient, HttpEndpoint, MockCaption, MockGeneration, MockSuperres, RetryPolicy, SuperresClient};
pub use image::{decode_and_normalize, load_image, normalize, resize_bilinear, Image, NormalizationSpec};
pub use manifest::{Manifest, ManifestEntry, Provenance, Split};
pub use split::{apportion, merge_and_resplit, stratified_split};
