//! Decision-tree dialog management.
//!
//! A tree induced from labelled cases decides which question to ask next; each
//! answer moves probability mass down the tree until a class is reached.
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod baselines;
pub mod dataset;
pub mod dialog;
pub mod evaluation;
pub mod induction;
pub mod persistence;
pub mod scalar;

pub use dataset::{AttributeValue, Dataset, Schema};
pub use induction::DecisionTree;

pub type Session = dialog::DialogSession<f64>;
pub type SessionF32 = dialog::DialogSession<f32>;
pub type Engine<'a> = dialog::DialogEngine<'a, f64>;
pub type EngineF32<'a> = dialog::DialogEngine<'a, f32>;
pub type Classification = induction::Classification<f64>;
pub type DialogConfig = dialog::DialogConfig<f64>;
pub type Turn = dialog::Turn<f64>;
pub type Answer = dialog::Answer<f64>;
pub type Outcome = dialog::Outcome<f64>;
pub type Step = dialog::Step<f64>;
