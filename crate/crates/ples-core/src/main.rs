use std::process::ExitCode;

fn main() -> ExitCode {
    let code = ples_core::cli::dispatch(std::env::args_os());
    ExitCode::from(u8::try_from(code.clamp(0, 255)).unwrap_or(2))
}
