//! Feature extraction: constant-Q spectrograms, MFCC sequences and elastic
//! augmentation.

mod cqt;
mod elastic;
mod mfcc;

pub use cqt::{cqt_frame, cqt_spectrogram, CqtConfig, Spectrogram, WindowKind, MAGNITUDE_FLOOR};
pub use elastic::{elastic_transform, elastic_warp};
pub use mfcc::{mfcc_sequence, MfccConfig};
