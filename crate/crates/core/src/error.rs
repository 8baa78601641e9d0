use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::recnet::CrvaeModel;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: argument {value} is outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{0}")]
    Contract(String),
    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged {
        step: usize,
        last_good: Box<CrvaeModel>,
    },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("column {column} is constant and cannot be normalized")]
    ConstantColumn { column: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
