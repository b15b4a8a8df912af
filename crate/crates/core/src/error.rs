use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} must be at least 1")]
    ZeroDimension { what: &'static str },

    #[error("sampling stride {stride} exceeds filter length {filter_len}; condensed weights would go unsampled")]
    StrideExceedsFilter { stride: usize, filter_len: usize },

    #[error("channel factor {factor} does not divide {channels} input channels")]
    ChannelFactor { channels: usize, factor: usize },

    #[error("denser factor {denser} does not divide sampling stride {stride}")]
    DenserFactor { stride: usize, denser: usize },

    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("empty input")]
    EmptyInput,

    #[error("input length {len} is shorter than filter length {filter_len} under valid padding")]
    InputTooShort { len: usize, filter_len: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("layer {name}: {source}")]
    Layer {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("activation cache does not match the current parameters")]
    StaleCache,

    #[error("backward pass requires a cache recorded in train mode")]
    EvalModeCache,

    #[error("layer is not condensed; no integral-image path applies")]
    NotCondensed,

    #[error("invalid hyper-parameter: {0}")]
    Hyper(&'static str),

    #[error("non-finite gradient in block {block}")]
    NonFiniteGradient { block: String },

    #[error("training diverged at iteration {iter}")]
    Diverged { iter: usize },

    #[error("codebook must hold 256 non-decreasing entries")]
    Codebook,
}

impl Error {
    pub(crate) fn in_layer(self, name: &str) -> Error {
        match self {
            Error::Layer { .. } => self,
            other => Error::Layer {
                name: name.into(),
                source: Box::new(other),
            },
        }
    }
}
