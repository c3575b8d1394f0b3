use std::path::{Path, PathBuf};

use ucbs_core::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_VERSION_MISMATCH: i32 = 4;
pub const EXIT_LOCKED: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("output directory is locked by another run ({0})")]
    Locked(PathBuf),
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Locked(_) => "locked",
            CliError::Csv { .. } => "invalid_input",
            CliError::Core(e) => match e {
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "missing_input",
                Error::Io { .. } => "io",
                Error::VersionMismatch { .. } => "version_mismatch",
                Error::InvalidArgument(_) => "invalid_argument",
                Error::InvalidInput(_) | Error::Image { .. } | Error::Format { .. } | Error::Json(_) => "invalid_input",
                Error::Diverged { .. } => "diverged",
                Error::UndefinedCorrelation(_) => "undefined_correlation",
                Error::UndefinedRatio(_) => "undefined_ratio",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => EXIT_USAGE,
            "missing_input" => EXIT_MISSING_INPUT,
            "version_mismatch" => EXIT_VERSION_MISMATCH,
            "locked" => EXIT_LOCKED,
            _ => EXIT_FAILURE,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string().replace('\n', " "),
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn io(kind: std::io::ErrorKind) -> CliError {
        CliError::io(Path::new("x"), std::io::Error::from(kind))
    }

    #[test]
    fn exit_codes_by_kind() {
        assert_eq!(CliError::usage("bad").exit_code(), EXIT_USAGE);
        assert_eq!(io(std::io::ErrorKind::NotFound).exit_code(), EXIT_MISSING_INPUT);
        assert_eq!(io(std::io::ErrorKind::PermissionDenied).exit_code(), EXIT_FAILURE);
        let v = CliError::Core(Error::VersionMismatch {
            format: "checkpoint",
            found: 9,
            expected: 1,
        });
        assert_eq!(v.exit_code(), EXIT_VERSION_MISMATCH);
        assert_eq!(CliError::Locked("l".into()).exit_code(), EXIT_LOCKED);
        assert_eq!(CliError::Core(Error::UndefinedRatio("r".into())).exit_code(), EXIT_FAILURE);
    }

    #[test]
    fn line_is_single_json_object() {
        let line = CliError::usage("two\nlines").to_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "usage");
        assert_eq!(v["exit_code"], EXIT_USAGE);
        assert_eq!(v["message"], "two lines");
    }
}
