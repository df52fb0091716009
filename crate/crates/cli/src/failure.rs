use epx::dataset::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Config = 3,
    Io = 4,
    Data = 5,
    Model = 6,
    Compute = 7,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: ExitKind, error: anyhow::Error) -> Self {
        Failure { kind, error }
    }

    pub fn msg(kind: ExitKind, msg: impl std::fmt::Display) -> Self {
        Failure::new(kind, anyhow::anyhow!("{msg}"))
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn kind(self, kind: ExitKind) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn kind(self, kind: ExitKind) -> CliResult<T> {
        self.map_err(|e| Failure::new(kind, e.into()))
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let kind = match e {
            DatasetError::Io { .. } => ExitKind::Io,
            _ => ExitKind::Data,
        };
        Failure::new(kind, e.into())
    }
}
