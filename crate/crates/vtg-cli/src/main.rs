use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    // A panic is a broken internal invariant: report it on stderr in the
    // same structured shape as ordinary errors and exit 2.
    let outcome = panic::catch_unwind(vtg_cli::run_from_args);
    match outcome {
        Ok(code) => ExitCode::from(code.clamp(0, u8::MAX as i32) as u8),
        Err(payload) => {
            let msg = if let Some(s) = payload.downcast_ref::<&str>() {
                (*s).to_string()
            } else if let Some(s) = payload.downcast_ref::<String>() {
                s.clone()
            } else {
                "panic with non-string payload".to_string()
            };
            // A reader hanging up mid-output (e.g. `vtg ... | head`) is not
            // a broken invariant; exit with the conventional pipe status.
            if msg.contains("Broken pipe") {
                return ExitCode::from(141);
            }
            let err = vtg_cli::CliError::Internal(msg);
            eprintln!("{}", err.structured());
            ExitCode::from(2)
        }
    }
}
