use std::io::{self, Write};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIDE_DIAG_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        tide_core::cli::run_command(std::env::args_os(), &mut out, &mut err)
    }))
    .unwrap_or(3);
    let _ = out.flush();
    ExitCode::from(code as u8)
}
