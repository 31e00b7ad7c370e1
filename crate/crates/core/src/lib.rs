//! Direction-of-arrival estimation for spherical microphone arrays by
//! rank-1 approximation of spherical-harmonic coefficient matrices, with a
//! shoebox room simulator and an evaluation harness.

pub mod audio;
pub mod config;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod lra;
pub mod mdp;
pub mod music;
pub mod pipeline;
pub mod room;
pub mod sh;
pub mod special;
pub mod stft;

pub use encoder::{CoefficientMatrix, Encoder, EncoderSettings, Projection};
pub use error::{Error, ErrorClass, Result};
pub use geometry::ArrayGeometry;
pub use lra::{localize_block, match_doa, normalize, rank1_extract, DoaEstimate, MdpEstimate, NormalizedMatrix};
pub use mdp::{build_dictionary, mdp, GridSpec, MdpDictionary, ModalDirectionalPattern};
pub use music::{shd_music, Pseudospectrum};
pub use sh::{Convention, Direction, OrderIndex};
pub use special::SphereKind;
pub use stft::{stft_forward, MultichannelSignal, Spectrogram, StftParams};
