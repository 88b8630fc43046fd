use std::fmt;

/// Error categories, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numerical,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { kind: Kind::Config, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, message: msg.into() }
    }

    /// One line: `error kind=<kind> code=<n> message="<escaped>"`.
    pub fn line(&self) -> String {
        let msg: String = self.message.lines().map(str::trim).collect::<Vec<_>>().join(" ");
        format!(
            "error kind={} code={} message={}",
            self.kind.as_str(),
            self.kind.code(),
            serde_json::to_string(&msg).expect("string serializes")
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<privkde::Error> for CliError {
    fn from(e: privkde::Error) -> Self {
        use privkde::Error as E;
        let kind = match &e {
            E::InvalidInput(_) | E::UnsupportedKernel { .. } | E::BudgetOutOfRange(_) | E::InvalidGrid(_) => {
                Kind::Config
            }
            E::OutOfGrid { .. } | E::MissingBandwidth { .. } | E::Data(_) => Kind::Data,
            E::DegenerateGram(_) | E::Numerical(_) => Kind::Numerical,
        };
        CliError { kind, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
