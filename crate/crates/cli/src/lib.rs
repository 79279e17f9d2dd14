//! Command-line front end and annotation service.

pub mod commands;
pub mod server;

use granule_core::error::ErrorClass;
use granule_core::Error;

/// Process exit code per error class. Usage errors exit with 2 (clap).
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Io => 3,
        ErrorClass::MissingInput => 4,
        ErrorClass::Schema => 5,
        ErrorClass::Config => 6,
        ErrorClass::SeedConflict => 7,
        ErrorClass::Data => 8,
    }
}

pub fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Io => "io",
        ErrorClass::MissingInput => "missing_input",
        ErrorClass::Schema => "schema",
        ErrorClass::Config => "config",
        ErrorClass::SeedConflict => "seed_conflict",
        ErrorClass::Data => "data",
    }
}

/// The single stderr line printed on failure.
pub fn error_line(e: &Error) -> String {
    let class = e.class();
    serde_json::json!({
        "error": {
            "class": class_name(class),
            "exit_code": exit_code(class),
            "message": e.to_string(),
        }
    })
    .to_string()
}
