use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    udpop_cli::configure_threads();
    let outcome = udpop_cli::dispatch(std::env::args_os());
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(outcome.stdout.as_bytes()).is_err() {
        return ExitCode::from(2);
    }
    ExitCode::from(outcome.code as u8)
}
