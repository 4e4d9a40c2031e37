use std::fmt;

/// A failed run, split by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, configuration or file system trouble: exit 1.
    Input(String),
    /// The numerics broke down on otherwise valid input: exit 2.
    Numerical(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<ppg_shape::Error> for Failure {
    fn from(e: ppg_shape::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
