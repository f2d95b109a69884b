//! Process exit codes.

use foraging::Error;

pub const CONFIG: u8 = 2;
pub const CHECKPOINT: u8 = 3;
pub const NUMERIC: u8 = 4;
const OTHER: u8 = 1;

/// Error tagged with the exit code it should produce, for failures whose
/// kind depends on where they happened (an unreadable file is a config
/// error when it is the config, a checkpoint error when it is a blob).
#[derive(Debug)]
pub struct Coded(pub u8);

impl std::fmt::Display for Coded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            CONFIG => f.write_str("configuration error"),
            CHECKPOINT => f.write_str("checkpoint error"),
            NUMERIC => f.write_str("numeric failure"),
            _ => f.write_str("failure"),
        }
    }
}

impl std::error::Error for Coded {}

pub trait Tag<T> {
    fn tag(self, code: u8) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for std::result::Result<T, E> {
    fn tag(self, code: u8) -> anyhow::Result<T> {
        self.map_err(|e| {
            let e: anyhow::Error = e.into();
            if e.downcast_ref::<Coded>().is_some() {
                e
            } else {
                e.context(Coded(code))
            }
        })
    }
}

fn classify(e: &Error) -> Option<u8> {
    match e {
        Error::Config(_) | Error::UnknownKey(_) | Error::Placement { .. } | Error::Usage(_) | Error::TokenRange { .. } => {
            Some(CONFIG)
        }
        Error::Checkpoint(_) | Error::ConfigHash { .. } | Error::MissingAgent { .. } => Some(CHECKPOINT),
        Error::Numeric(_) => Some(NUMERIC),
        _ => None,
    }
}

pub fn code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(Error::Numeric(_)) = cause.downcast_ref::<Error>() {
            return NUMERIC;
        }
    }
    if let Some(c) = e.downcast_ref::<Coded>() {
        return c.0;
    }
    e.chain()
        .filter_map(|c| c.downcast_ref::<Error>())
        .find_map(classify)
        .unwrap_or(OTHER)
}
