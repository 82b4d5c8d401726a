//! Credibility and reputation scoring for threat-intelligence posts.
//!
//! The engine combines two views of a post:
//!
//! * an embedding view: security concepts are tagged in the text ([`svce`]), their
//!   word vectors summed ([`embeddings`]), and the post is scored by its distance
//!   to "credible" and "non-credible" class centroids;
//! * a metadata view: post and author features ([`features`]) fed to a linear SVM
//!   whose margin is calibrated into a probability ([`svm`]).
//!
//! [`ensemble`] fuses both into a final probability and verdict, [`pipeline`]
//! wires fitting and scoring together, and [`evaluation`] runs stratified
//! cross-validation over labeled posts produced by [`annotation`].

pub mod annotation;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod svce;
pub mod svm;
pub mod synthetic;

mod label;
mod util;

pub use label::Label;
