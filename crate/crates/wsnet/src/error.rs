use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems with the bytes of a model or dataset file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected}")]
    BadMagic { expected: &'static str },
    #[error("truncated {what}")]
    Truncated { what: &'static str },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown block flag {0}")]
    BadFlag(u8),
    #[error("{what}: expected {expected} bytes, found {found}")]
    Size {
        what: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("clip {clip}: label {label} out of range for {classes} classes")]
    Label { clip: usize, label: u32, classes: u32 },
    #[error("{0} is not valid UTF-8")]
    Utf8(&'static str),
    #[error("block {0}: {1}")]
    Block(String, &'static str),
    #[error("model already holds quantized blocks")]
    AlreadyQuantized,
    #[error("model carries no network configuration")]
    MissingConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] wsnet_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 validation, 3 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 1,
            Error::Io { .. } | Error::Failed(_) => 3,
            Error::Core(e) if is_runtime(e) => 3,
            Error::Config { .. } | Error::Format(_) | Error::Core(_) => 2,
        }
    }
}

fn is_runtime(e: &wsnet_core::Error) -> bool {
    use wsnet_core::Error as E;
    match e {
        E::Diverged { .. } | E::NonFiniteGradient { .. } => true,
        E::Layer { source, .. } => is_runtime(source),
        _ => false,
    }
}
