use noslip_core::dynamics::DynamicsError;
use noslip_core::experiments::ExperimentError;
use noslip_core::orbits::OrbitError;
use noslip_core::output::OutputError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Config(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

fn is_numerical(e: &DynamicsError) -> bool {
    matches!(e, DynamicsError::Numerics { .. } | DynamicsError::NonFinite)
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        if is_numerical(&e) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<OrbitError> for CliError {
    fn from(e: OrbitError) -> Self {
        match e {
            OrbitError::Dynamics(d) => d.into(),
            OrbitError::NoClosingSign(..) | OrbitError::AmbiguousSign => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Dynamics(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<noslip_core::geometry::GeometryError> for CliError {
    fn from(e: noslip_core::geometry::GeometryError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        match e {
            OutputError::Io(source) => CliError::io("writing output", source),
            other => CliError::Config(other.to_string()),
        }
    }
}
