use std::process::ExitCode;

use falsecorr_cli::{emit_report, execute, parse_args};

fn main() -> ExitCode {
    let cfg = match parse_args(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            return ExitCode::from(1);
        }
    };
    if let Err(e) = emit_report(&outcome.report, &cfg) {
        eprintln!("error[{}]: {e}", e.code());
        return ExitCode::from(1);
    }
    ExitCode::from(outcome.exit_code as u8)
}
